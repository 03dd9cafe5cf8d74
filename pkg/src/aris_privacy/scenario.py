"""Node geometry and scenario configuration.

A :class:`Scenario` is immutable. The defaults reproduce the reference
simulation setup (M = K = 4, N_t = 512, -100 dBm noise floors, 10 dB RSS
deviation, L0 = -37.3 dB, exponent 2.2, fixed SU/ARIS/RU-centre positions).
Random placements are produced by :func:`place_nodes`, which returns a new
scenario with ``ru_pos``/``mu_pos`` filled in.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .units import PathLossModel, db_to_linear, dbm_to_watt

Position = tuple  # (x, y, z) in metres


def _pos(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite position {p!r}")
    return arr


@dataclass(frozen=True)
class Scenario:
    su_pos: Position = (50.0, 50.0, 50.0)
    aris_pos: Position = (270.0, 120.0, 20.0)
    ru_center: Position = (350.0, 110.0, 50.0)
    d_sr: float = 5.0
    d_se: float = 400.0
    hemisphere: str = "ground"
    ru_pos: tuple = ()
    mu_pos: tuple = ()
    M: int = 4
    K: int = 4
    E: int = 6
    n_t: int = 512
    p_s_max: float = 10e-3
    p_r_max: float = 20e-3
    sigma2: float = 1e-13
    sigma_v2: float = 1e-13
    sigma_db: float = 10.0
    loss: PathLossModel = field(default_factory=PathLossModel)
    gamma_st: float = 10.0
    kappa_st: float = 1.0
    varrho_st: float = 0.1
    omega: float = 0.15

    def __post_init__(self):
        if self.K < 1 or self.E < 0 or self.n_t < 1 or self.M < 1:
            raise DomainError("need M >= 1, K >= 1, E >= 0, n_t >= 1")
        for name in ("p_s_max", "p_r_max", "sigma2", "sigma_v2"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.sigma_db < 0 or self.d_sr <= 0 or self.d_se <= 0:
            raise DomainError("sigma_db >= 0, d_sr > 0 and d_se > 0 required")
        for name in ("gamma_st", "kappa_st", "varrho_st", "omega"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.hemisphere not in HEMISPHERES:
            raise DomainError(f"unknown hemisphere rule {self.hemisphere!r}")
        if self.ru_pos and len(self.ru_pos) != self.K:
            raise DomainError("ru_pos length must equal K")
        if self.mu_pos and len(self.mu_pos) != self.E:
            raise DomainError("mu_pos length must equal E")
        for p in (self.su_pos, self.aris_pos, self.ru_center, *self.ru_pos, *self.mu_pos):
            _pos(p)

    @property
    def placed(self) -> bool:
        return len(self.ru_pos) == self.K and len(self.mu_pos) == self.E

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DistanceSet:
    d_H: float
    d_h: np.ndarray  # SU -> MU e
    d_g: np.ndarray  # ARIS -> MU e
    v_ratio: np.ndarray  # d_g / d_h
    d_hk: np.ndarray  # SU -> RU k
    d_gk: np.ndarray  # ARIS -> RU k


# Placement predicates for MUs drawn on the sphere of radius d_se about the SU.
HEMISPHERES = {
    "ground": lambda p, su: p[2] >= 0.0,
    "upper": lambda p, su: p[2] >= su[2],
    "sphere": lambda p, su: True,
}


def _unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def place_rus(center, radius: float, k: int, rng: np.random.Generator) -> list:
    """Uniform points on the sphere of ``radius`` about ``center``."""
    if radius <= 0:
        raise DomainError("radius must be positive")
    if k <= 0:
        return []
    pts = _pos(center) + radius * _unit_vectors(k, rng)
    return [tuple(p) for p in pts]


def place_mus(su, d_se: float, e: int, rng: np.random.Generator, hemisphere: str = "ground") -> list:
    """Uniform points at distance ``d_se`` from ``su`` satisfying the hemisphere rule."""
    if d_se <= 0:
        raise DomainError("d_se must be positive")
    keep = HEMISPHERES[hemisphere]
    su = _pos(su)
    out: list = []
    while len(out) < e:
        for u in _unit_vectors(max(2 * (e - len(out)), 4), rng):
            p = su + d_se * u
            if keep(p, su):
                out.append(tuple(p))
                if len(out) == e:
                    break
    return out


def place_nodes(s: Scenario, rng: np.random.Generator) -> Scenario:
    """Return ``s`` with freshly drawn RU and MU positions."""
    rus = place_rus(s.ru_center, s.d_sr, s.K, rng)
    mus = place_mus(s.su_pos, s.d_se, s.E, rng, s.hemisphere)
    return s.replace(ru_pos=tuple(rus), mu_pos=tuple(mus))


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(np.atleast_2d(a) - b, axis=-1)
    if np.any(d <= 0):
        raise DomainError("coincident nodes")
    return d


def distances(s: Scenario) -> DistanceSet:
    if not s.placed:
        raise DomainError("scenario has no node placements")
    su, aris = _pos(s.su_pos), _pos(s.aris_pos)
    mus = np.array(s.mu_pos, dtype=float).reshape(-1, 3)
    rus = np.array(s.ru_pos, dtype=float).reshape(-1, 3)
    d_H = float(_dist(aris, su)[0])
    d_h = _dist(mus, su) if s.E else np.zeros(0)
    d_g = _dist(mus, aris) if s.E else np.zeros(0)
    return DistanceSet(
        d_H=d_H,
        d_h=d_h,
        d_g=d_g,
        v_ratio=d_g / d_h if s.E else np.zeros(0),
        d_hk=_dist(rus, su),
        d_gk=_dist(rus, aris),
    )


# ---------------------------------------------------------------------------
# configuration files

_POWER_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*(dBm|dBW|mW|uW|W)\s*$")
_RATIO_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*(dB)?\s*$")

_POWER_KEYS = {"p_s_max", "p_r_max", "sigma2", "sigma_v2"}
_RATIO_KEYS = {"gamma_st", "kappa_st", "varrho_st"}
_FLOAT_KEYS = {"d_sr", "d_se", "sigma_db", "omega", "l0_db", "exponent"}
_INT_KEYS = {"M", "K", "E", "n_t"}
_POS_KEYS = {"su_pos", "aris_pos", "ru_center"}
_STR_KEYS = {"hemisphere"}

CONFIG_KEYS = _POWER_KEYS | _RATIO_KEYS | _FLOAT_KEYS | _INT_KEYS | _POS_KEYS | _STR_KEYS


def parse_power(value) -> float:
    """Watts from a bare number (watts) or a string with a unit suffix."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = _POWER_RE.match(str(value))
    if not m:
        raise ConfigError(f"cannot parse power {value!r}")
    x, unit = float(m.group(1)), m.group(2)
    if unit == "dBm":
        return dbm_to_watt(x)
    if unit == "dBW":
        return db_to_linear(x)
    return x * {"W": 1.0, "mW": 1e-3, "uW": 1e-6}[unit]


def parse_ratio(value) -> float:
    """Linear ratio from a bare number or a ``"<x> dB"`` string."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = _RATIO_RE.match(str(value))
    if not m:
        raise ConfigError(f"cannot parse ratio {value!r}")
    x = float(m.group(1))
    return db_to_linear(x) if m.group(2) else x


def scenario_from_mapping(data: dict, base: Scenario | None = None) -> Scenario:
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    base = base or Scenario()
    kw: dict = {}
    loss = {"l0_db": base.loss.l0_db, "exponent": base.loss.exponent}
    try:
        for key, value in data.items():
            if key in _POWER_KEYS:
                kw[key] = parse_power(value)
            elif key in _RATIO_KEYS:
                kw[key] = parse_ratio(value)
            elif key in ("l0_db", "exponent"):
                loss[key] = float(value)
            elif key in _FLOAT_KEYS:
                kw[key] = float(value)
            elif key in _INT_KEYS:
                if isinstance(value, bool) or int(value) != value:
                    raise ConfigError(f"{key} must be an integer")
                kw[key] = int(value)
            elif key in _POS_KEYS:
                if len(value) != 3:
                    raise ConfigError(f"{key} must have three coordinates")
                kw[key] = tuple(float(v) for v in value)
            else:
                kw[key] = str(value)
        kw["loss"] = PathLossModel(**loss)
        return base.replace(**kw)
    except (TypeError, DomainError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    """Read a flat TOML configuration file into a :class:`Scenario`."""
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: configuration must be flat, found tables {nested}")
    return scenario_from_mapping(data)
