"""Flat ``key = value`` scenario files with a typed schema.

Lines are ``key = value``; ``#`` starts a comment.  Pairs are written
``a b``, lists are comma separated, and words inside ``words`` are space
separated tokens (``id`` is the empty word), e.g. ``words = id, dx1, u1 dx1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .fields import Flavor, OperatorWord, parse_word

SOLVERS = ("free_exact", "vlasov_poisson")
DATA_KINDS = ("gaussian", "box", "table", "zero")
POISSON_METHODS = ("spectral", "kernel")
FREE_MONITORS = ("decay", "bardos_degond", "ks", "conservation")
VP_MONITORS = (
    "mass",
    "energy",
    "conservation",
    "weighted",
    "norm",
    "coefficients",
    "commutation",
    "modified_ks",
)


class ConfigError(ValueError):
    """Raised for unreadable files, unknown keys and invalid values."""


def _pair(text):
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return (float(parts[0]), float(parts[1]))


def _floats(text):
    return tuple(float(p) for p in text.replace(",", " ").split())


def _names(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


# key -> (parser, default); a default of ... marks a required key
SCHEMA = {
    "name": (str, ...),
    "dimension": (int, ...),
    "solver": (str, "free_exact"),
    "mu": (int, 1),
    "x_range": (_pair, ...),
    "v_range": (_pair, ...),
    "x_points": (int, ...),
    "v_points": (int, ...),
    "data": (str, "gaussian"),
    "data_center": (float, 0.0),
    "data_width_x": (float, 1.0),
    "data_width_v": (float, 1.0),
    "data_amplitude": (float, None),
    "data_half_width_x": (float, 1.0),
    "data_half_width_v": (float, 1.0),
    "data_table": (str, None),
    "dt": (float, ...),
    "t_end": (float, ...),
    "times": (_floats, None),
    "every": (int, 1),
    "monitors": (_names, ()),
    "words": (_names, ("id",)),
    "N": (int, 2),
    "delta": (float, 0.1),
    "p": (float, 1.0),
    "q": (float, 2.0),
    "fit_window": (_pair, None),
    "poisson_method": (str, "spectral"),
    "force": (_bool, True),
    "output_dir": (str, None),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario settings; ``base`` is the config file's directory."""

    values: dict
    base: Path = field(default_factory=Path.cwd)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def word_list(self) -> list:
        out = []
        for w in self.values["words"]:
            out.append(OperatorWord() if w == "id" else parse_word(w, self.values["dimension"], Flavor.MICRO))
        return out

    @property
    def output_path(self) -> Path:
        out = self.values["output_dir"] or f"out/{self.values['name']}"
        p = Path(out)
        return p if p.is_absolute() else self.base / p

    @property
    def table_path(self) -> Path | None:
        t = self.values["data_table"]
        if t is None:
            return None
        p = Path(t)
        return p if p.is_absolute() else self.base / p

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.values.items()}


def parse_text(text: str, base: Path | None = None) -> ScenarioConfig:
    """Parse config text; raises ConfigError with the offending line."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser = SCHEMA[key][0]
        try:
            raw[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    values = {}
    for key, (_, default) in SCHEMA.items():
        if key in raw:
            values[key] = raw[key]
        elif default is ...:
            raise ConfigError(f"missing required key {key!r}")
        else:
            values[key] = default
    cfg = ScenarioConfig(values, Path.cwd() if base is None else Path(base))
    validate(cfg)
    return cfg


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_text(text, path.resolve().parent)


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: ScenarioConfig) -> None:
    v = cfg.values
    _need(v["dimension"] in (1, 2, 3), "dimension must be 1, 2 or 3")
    _need(v["solver"] in SOLVERS, f"solver must be one of {SOLVERS}")
    _need(v["mu"] in (1, -1), "mu must be 1 or -1")
    _need(v["data"] in DATA_KINDS, f"data must be one of {DATA_KINDS}")
    _need(v["poisson_method"] in POISSON_METHODS, f"poisson_method must be one of {POISSON_METHODS}")
    for key in ("x_range", "v_range"):
        _need(v[key][0] < v[key][1], f"{key} must be increasing")
    _need(v["x_points"] >= 5 and v["v_points"] >= 5, "need at least 5 points per axis")
    _need(v["dt"] > 0, "dt must be positive")
    _need(v["t_end"] > v["dt"], "t_end must exceed dt")
    _need(v["every"] >= 1, "every must be >= 1")
    _need(0 < v["delta"] < 1, "delta must lie in (0, 1)")
    _need(v["N"] >= 0, "N must be >= 0")
    _need(v["p"] >= 1 and v["q"] >= 0, "need p >= 1 and q >= 0")
    for key in ("data_width_x", "data_width_v", "data_half_width_x", "data_half_width_v"):
        _need(v[key] > 0, f"{key} must be positive")
    if v["times"] is not None:
        t = v["times"]
        _need(len(t) > 0 and all(x >= 0 for x in t), "times must be non-negative")
        _need(all(b > a for a, b in zip(t, t[1:])), "times must be increasing")
    if v["fit_window"] is not None:
        _need(v["fit_window"][0] < v["fit_window"][1], "fit_window must be increasing")
    allowed = FREE_MONITORS if v["solver"] == "free_exact" else VP_MONITORS
    for m in v["monitors"]:
        _need(m in allowed, f"monitor {m!r} is not available for solver {v['solver']}")
    if v["data"] == "table":
        _need(v["data_table"] is not None, "data = table needs data_table")
        _need(cfg.table_path.is_file(), f"data_table {cfg.table_path} does not exist")
    try:
        cfg.word_list()
    except ValueError as exc:
        raise ConfigError(f"bad word: {exc}") from None
