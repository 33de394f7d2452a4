"""TOML run configuration with line/column diagnostics."""
from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import model


class ConfigError(ValueError):
    def __init__(self, message, path=None, line=None, col=None):
        self.path, self.line, self.col = path, line, col
        where = f"{path}:" if path else ""
        if line is not None:
            where += f"{line}:{col}:"
        super().__init__(f"{where} {message}" if where else message)


@dataclass
class RunConfig:
    subcommand: str
    path: str | None
    data: dict
    text: str = ""
    out: str = "out"
    seed: int = 0
    workers: int = 1
    tolerances: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)

    @property
    def sha256(self):
        return hashlib.sha256(self.text.encode()).hexdigest()


def load(path):
    """Parse a TOML file; returns (data, text)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        if line is None:
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            if m:
                line, col = int(m.group(1)), int(m.group(2))
        raise ConfigError(msg, path, line, col) from None
    return data, text


def locate(text, key, table=None):
    """(line, col) of ``key = `` inside ``[table]`` (1-based), or of the table header."""
    lines = text.splitlines()
    start = 0
    if table is not None:
        hdr = re.compile(r"^\s*\[+\s*" + re.escape(table) + r"\s*\]+\s*$")
        for i, ln in enumerate(lines):
            if hdr.match(ln):
                start = i
                break
        else:
            return None, None
    pat = re.compile(r"^(\s*)" + re.escape(key) + r"\s*=")
    for i in range(start, len(lines)):
        if i > start and table is not None and lines[i].lstrip().startswith("["):
            break
        m = pat.match(lines[i])
        if m:
            return i + 1, len(m.group(1)) + 1
    return (start + 1, 1) if table is not None else (None, None)


RULE_ARGS = {
    "zero": (), "constant": ("c",), "euler": ("c", "x_cut"), "linear": ("slope",),
    "decaying_anderson": ("coupling", "seed", "decay"), "anderson": ("coupling", "seed"),
    "tabulated": ("points", "values", "file"), "power_law": ("C", "eta", "offset", "modulation", "freq", "phase"),
    "exp_weighted": ("C", "rate"), "compact_support": ("values", "support_end"), "sum": ("terms",),
}


def potential_from(table, text="", path=None, name="potential", perturbation=False, default_kind=None):
    """Build a PotentialSpec from a config table; errors point at the offending key."""
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table", path, *locate(text, name))
    rule = table.get("rule")
    if rule is None:
        raise ConfigError(f"[{name}] needs a 'rule'", path, *locate(text, "rule", name))
    if rule not in RULE_ARGS:
        raise ConfigError(f"unknown rule {rule!r}", path, *locate(text, "rule", name))
    kind = table.get("kind", default_kind or "continuum")
    if kind not in model.KINDS:
        raise ConfigError(f"unknown kind {kind!r}", path, *locate(text, "kind", name))
    params = {k: v for k, v in table.items() if k not in ("rule", "kind")}
    for k in params:
        if k not in RULE_ARGS[rule]:
            raise ConfigError(f"rule {rule!r} takes no parameter {k!r}", path, *locate(text, k, name))
    try:
        if rule == "sum":
            terms = [potential_from(t, text, path, f"{name}.terms", perturbation, kind) for t in params["terms"]]
            return model.sum_specs(terms)
        if rule == "tabulated" and "file" in params:
            return model.load_tabulated(params["file"], kind=kind, perturbation=perturbation)
        if rule == "power_law" or rule == "exp_weighted" or rule == "compact_support":
            return model.make(kind, rule, perturbation=True, **params)
        return model.make(kind, rule, perturbation=perturbation, **params)
    except (model.SpecError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc), path, *locate(text, "rule", name)) from None


def require(data, key, text="", path=None, table=None, types=None):
    src = data if table is None else data.get(table, {})
    if key not in src:
        where = locate(text, table) if table else (None, None)
        raise ConfigError(f"missing required key {key!r}" + (f" in [{table}]" if table else ""), path, *where)
    v = src[key]
    if types is not None and not isinstance(v, types):
        raise ConfigError(f"{key!r} has the wrong type ({type(v).__name__})", path, *locate(text, key, table))
    return v


def grid_from(data, kind, text="", path=None, overrides=None):
    g = dict(data.get("grid", {}))
    g.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "horizon" not in g:
        raise ConfigError("[grid] needs 'horizon'", path, *locate(text, "grid"))
    try:
        if kind == "discrete":
            return model.Grid.discrete(int(g["horizon"]))
        return model.Grid.continuum(float(g["horizon"]), float(g.get("step", 0.01)))
    except model.SpecError as exc:
        raise ConfigError(str(exc), path, *locate(text, "horizon", "grid")) from None
