"""Physical constants, the scaled unit system and run configuration.

Internally everything runs with m1 = omega0 = 1 and lengths in l0, the
equilibrium separation of two qubit ions sharing one well of frequency
omega0.  In these units e^2/(4 pi eps0) = 1/2 exactly.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .ansatz import AnsatzSpec
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# CODATA 2018
ELEMENTARY_CHARGE = 1.602176634e-19  # C
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
HBAR = 1.054571817e-34  # J s

COULOMB_K = ELEMENTARY_CHARGE**2 / (4 * math.pi * VACUUM_PERMITTIVITY)

#: e^2/(4 pi eps0) in scaled units; fixed by the definition of l0
SCALED_COULOMB_K = 0.5


def characteristic_length(m1, omega0):
    """Return l0 = (2 e^2 / (4 pi eps0 m1 omega0^2))^(1/3) in metres.

    ``m1`` is in kg, ``omega0`` in rad/s.
    """
    if not (m1 > 0 and omega0 > 0):
        raise ValueError(f"mass and frequency must be positive, got m1={m1}, omega0={omega0}")
    return (2 * COULOMB_K / (m1 * omega0**2)) ** (1 / 3)


@dataclass(frozen=True)
class IonSpecies:
    label: str = field(compare=False)
    mass_u: float
    charge: int = 1

    def __post_init__(self):
        if not self.mass_u > 0:
            raise ConfigError(f"ion mass must be positive, got {self.mass_u}", key="mass_u")
        if self.charge != 1:
            raise ConfigError("only singly charged ions are supported", key="charge")

    @property
    def mass_kg(self):
        return self.mass_u * ATOMIC_MASS_UNIT


CALCIUM_40 = IonSpecies("40Ca+", 40.0)
MAGNESIUM_24 = IonSpecies("24Mg+", 24.0)


# unit tag -> (SI per scaled) factory
_UNIT_TAGS = ("time", "length", "frequency", "frequency_sq", "curvature", "energy")


@dataclass(frozen=True)
class UnitSystem:
    """Scaled units tied to the qubit mass and its initial trap frequency."""

    omega0: float
    m1: float
    mode: str = "scaled"

    def __post_init__(self):
        if not (self.omega0 > 0 and self.m1 > 0):
            raise ConfigError("omega0 and m1 must be positive", key="omega0_hz")
        if self.mode not in ("scaled", "SI"):
            raise ConfigError(f"unknown unit mode {self.mode!r}", key="mode")

    @classmethod
    def for_ion(cls, qubit: IonSpecies, omega0: float) -> "UnitSystem":
        return cls(omega0=omega0, m1=qubit.mass_kg)

    @property
    def l0(self):
        return characteristic_length(self.m1, self.omega0)

    @property
    def coulomb_k(self):
        return SCALED_COULOMB_K

    @property
    def hbar_scaled(self):
        """hbar in units of m1 omega0 l0^2."""
        return HBAR / (self.m1 * self.omega0 * self.l0**2)

    @property
    def zero_point_ratio(self):
        """Qubit zero-point length sqrt(hbar/(m1 omega0)) divided by l0."""
        return math.sqrt(self.hbar_scaled)

    def _factor(self, unit):
        if unit == "time":
            return 1 / self.omega0
        if unit == "length":
            return self.l0
        if unit == "frequency":
            return self.omega0
        if unit == "frequency_sq":
            return self.omega0**2
        if unit == "curvature":
            return self.m1 * self.omega0**2
        if unit == "energy":
            return HBAR * self.omega0
        raise ValueError(f"unknown unit tag {unit!r}; expected one of {_UNIT_TAGS}")

    def to_scaled(self, value, unit):
        return value / self._factor(unit)

    def from_scaled(self, value, unit):
        return value * self._factor(unit)


@dataclass(frozen=True)
class CollisionConfig:
    qubit: IonSpecies = CALCIUM_40
    coolant: IonSpecies = MAGNESIUM_24
    omega0: float = 2 * math.pi * 1e6
    ansatz: AnsatzSpec = field(default_factory=lambda: AnsatzSpec("gaussian_bump", math.sqrt(2)))
    phase_tolerance: float = 1e-4
    sample_dt: float = 0.01
    strict_curvature: bool = False
    combine_sigma: float = 0.2
    combine_r_start: float = 100.0
    coolants: int = 2
    transport_heating: float = 0.0

    def __post_init__(self):
        if not self.phase_tolerance > 0:
            raise ConfigError("phase_tolerance must be positive", key="phase_tolerance")
        if not self.sample_dt > 0:
            raise ConfigError("sample_dt_scaled must be positive", key="sample_dt_scaled")
        if not self.omega0 > 0:
            raise ConfigError("omega0_hz must be positive", key="omega0_hz")
        if not self.combine_sigma > 0:
            raise ConfigError("combine.sigma_scaled must be positive", key="combine.sigma_scaled")
        if not self.combine_r_start > 1:
            raise ConfigError("combine.r_start_l0 must exceed 1", key="combine.r_start_l0")
        if self.transport_heating < 0:
            raise ConfigError("protocol.transport_heating must be >= 0", key="protocol.transport_heating")

    @property
    def mu(self):
        """Coolant-to-qubit mass ratio m2/m1."""
        return self.coolant.mass_u / self.qubit.mass_u

    @property
    def units(self) -> UnitSystem:
        return UnitSystem.for_ion(self.qubit, self.omega0)

    def to_dict(self):
        """Flat key/value snapshot using the config-file key names."""
        return {
            "qubit_mass_u": self.qubit.mass_u,
            "coolant_mass_u": self.coolant.mass_u,
            "omega0_hz": self.omega0 / (2 * math.pi),
            "ansatz.kind": self.ansatz.kind,
            "ansatz.sigma_scaled": self.ansatz.sigma,
            "phase_tolerance": self.phase_tolerance,
            "sample_dt_scaled": self.sample_dt,
            "strict_curvature": self.strict_curvature,
            "combine.sigma_scaled": self.combine_sigma,
            "combine.r_start_l0": self.combine_r_start,
            "protocol.coolants": self.coolants,
            "protocol.transport_heating": self.transport_heating,
        }


_KEYS = {
    "qubit_mass_u": float,
    "coolant_mass_u": float,
    "omega0_hz": float,
    "ansatz.kind": str,
    "ansatz.sigma_scaled": float,
    "phase_tolerance": float,
    "sample_dt_scaled": float,
    "strict_curvature": bool,
    "combine.sigma_scaled": float,
    "combine.r_start_l0": float,
    "protocol.coolants": int,
    "protocol.transport_heating": float,
}


def _flatten(table, prefix=""):
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield name, value


def config_from_mapping(values) -> CollisionConfig:
    """Build a config from flat ``{dotted.key: value}`` pairs."""
    flat = {}
    for key, value in values.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown configuration key {key!r}", key=key)
        kind = _KEYS[key]
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be true or false", key=key)
        elif kind is str:
            if not isinstance(value, str):
                raise ConfigError(f"{key} must be a string", key=key)
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number, got {value!r}", key=key)
            if kind is int and int(value) != value:
                raise ConfigError(f"{key} must be an integer", key=key)
            value = kind(value)
            if not math.isfinite(value):
                raise ConfigError(f"{key} must be finite", key=key)
        flat[key] = value

    defaults = CollisionConfig()
    kwargs = {}
    try:
        if "qubit_mass_u" in flat:
            kwargs["qubit"] = IonSpecies("qubit", flat["qubit_mass_u"])
    except ConfigError as exc:
        raise ConfigError(str(exc), key="qubit_mass_u") from None
    try:
        if "coolant_mass_u" in flat:
            kwargs["coolant"] = IonSpecies("coolant", flat["coolant_mass_u"])
    except ConfigError as exc:
        raise ConfigError(str(exc), key="coolant_mass_u") from None
    if "omega0_hz" in flat:
        kwargs["omega0"] = 2 * math.pi * flat["omega0_hz"]
    kind = flat.get("ansatz.kind", defaults.ansatz.kind)
    sigma = flat.get("ansatz.sigma_scaled", defaults.ansatz.sigma)
    try:
        kwargs["ansatz"] = AnsatzSpec(kind, sigma)
    except ValueError as exc:
        key = "ansatz.kind" if "kind" in str(exc) else "ansatz.sigma_scaled"
        raise ConfigError(str(exc), key=key) from None
    renames = {
        "phase_tolerance": "phase_tolerance",
        "sample_dt_scaled": "sample_dt",
        "strict_curvature": "strict_curvature",
        "combine.sigma_scaled": "combine_sigma",
        "combine.r_start_l0": "combine_r_start",
        "protocol.coolants": "coolants",
        "protocol.transport_heating": "transport_heating",
    }
    for key, attr in renames.items():
        if key in flat:
            kwargs[attr] = flat[key]
    return CollisionConfig(**kwargs)


def load_config(path) -> CollisionConfig:
    """Read a TOML run configuration.

    Dotted keys may be written either inline (``ansatz.kind = "..."``) or
    as tables (``[ansatz]``).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", key=None) from None
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}", key=None) from None
    return config_from_mapping(dict(_flatten(table)))


def dump_config(config: CollisionConfig) -> str:
    """Serialise a config back to TOML text readable by :func:`load_config`."""
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = f'"{value}"'
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ATOMIC_MASS_UNIT",
    "CALCIUM_40",
    "COULOMB_K",
    "CollisionConfig",
    "ELEMENTARY_CHARGE",
    "HBAR",
    "IonSpecies",
    "MAGNESIUM_24",
    "SCALED_COULOMB_K",
    "UnitSystem",
    "VACUUM_PERMITTIVITY",
    "characteristic_length",
    "config_from_mapping",
    "dump_config",
    "load_config",
]
