"""Exogenous network parameters and the flat key=value config format."""
import dataclasses
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Tuple

import anyconfig
import numpy as np

from .errors import InvalidConfigError
from .rdp.analysis import GModel, IdentityG, parse_gmodel

logger = logging.getLogger(__name__)

SUCCESS_MODES = ("analytic", "flooded")


class TauModel(ABC):
    """Expected route lifetime tau(n), in slots."""

    kind: str

    @abstractmethod
    def tau(self, n: int) -> float:
        raise NotImplementedError("Must be implemented by subclass")

    @abstractmethod
    def to_string(self) -> str:
        raise NotImplementedError("Must be implemented by subclass")


@dataclass(frozen=True)
class ConstantTau(TauModel):
    value: float = 50.0
    kind = "constant"

    def __post_init__(self):
        if self.value <= 0:
            raise InvalidConfigError(f"constant tau must be > 0, got {self.value}")

    def tau(self, n: int) -> float:
        return float(self.value)

    def to_string(self) -> str:
        return f"constant:{self.value:g}"


@dataclass(frozen=True)
class InverseSqrtTau(TauModel):
    """tau(n) = coeff / sqrt(n): routes break once any of ~sqrt(n) links does."""

    coeff: float = 2000.0
    kind = "inverse_sqrt"

    def __post_init__(self):
        if self.coeff <= 0:
            raise InvalidConfigError(f"tau coefficient must be > 0, got {self.coeff}")

    def tau(self, n: int) -> float:
        return self.coeff / math.sqrt(n)

    def to_string(self) -> str:
        return f"inverse_sqrt:{self.coeff:g}"


@dataclass(frozen=True)
class TableTau(TauModel):
    """tau(n) looked up in a table, log-log interpolated and clamped at the ends."""

    points: Tuple[Tuple[int, float], ...] = ()
    kind = "table"

    def __post_init__(self):
        if not self.points:
            raise InvalidConfigError("tau table needs at least one entry")
        if any(n < 1 or t <= 0 for n, t in self.points):
            raise InvalidConfigError("tau table entries need n >= 1 and tau > 0")
        object.__setattr__(self, "points", tuple(sorted(self.points)))

    def tau(self, n: int) -> float:
        ns = np.log([p[0] for p in self.points])
        ts = np.log([p[1] for p in self.points])
        return float(np.exp(np.interp(math.log(n), ns, ts)))

    def to_string(self) -> str:
        body = ";".join(f"{n}={t:g}" for n, t in self.points)
        return f"table:{body}"


def parse_tau_model(text: str) -> TauModel:
    """Parse ``constant:50``, ``inverse_sqrt:2000`` or ``table:256=40;1024=20``."""
    kind, _, rest = str(text).strip().partition(":")
    try:
        if kind == "constant":
            return ConstantTau(float(rest))
        if kind == "inverse_sqrt":
            return InverseSqrtTau(float(rest))
        if kind == "table":
            pairs = [item.split("=", 1) for item in rest.split(";") if item]
            return TableTau(tuple((int(float(k)), float(v)) for k, v in pairs))
    except ValueError as exc:
        if isinstance(exc, InvalidConfigError):
            raise
        raise InvalidConfigError(f"Cannot parse tau model {text!r}: {exc}") from exc

    msg = f"Unknown tau model {text!r}."
    msg += " Expected one of constant:<c>, inverse_sqrt:<c>, table:<n=tau;...>"
    raise InvalidConfigError(msg)


@dataclass(frozen=True)
class NetworkConfig:
    """All exogenous parameters of one network.

    The first block mirrors the system model; the second block holds the
    knobs of the slotted simulator. Time is measured in slots of length
    ``slot_length = s_rreq / w`` and rates per slot.

    Parameters
    ----------
    n : int
        Node count.
    w : float
        Link rate, bits per unit time.
    s_rreq : float
        RREQ (and data packet) size in bits.
    delta : float
        Protocol model guard factor.
    nu : float
        Per node RDP initiation rate while in state N, attempts per slot.
        ``nu = 0`` is accepted and means nodes never retry.
    theta : float
        Fraction of slots reserved for route discovery (Scheme A).
    area_coeff : float
        ``c_a`` in the reception area ``a(n) = min(1, c_a / n)``.
    tau_model : TauModel
        Expected D period length as a function of n.
    seed : int
        Root of every random stream used for this network.
    """

    n: int = 256
    w: float = 1.0
    s_rreq: float = 1.0
    delta: float = 1.0
    nu: float = 0.1
    theta: float = 0.5
    area_coeff: float = 16.0
    tau_model: TauModel = field(default_factory=lambda: ConstantTau(50.0))
    seed: int = 0

    success_mode: str = "analytic"
    gmodel: GModel = field(default_factory=IdentityG)
    path_loss_exponent: float = 3.0
    warmup_fraction: float = 0.2
    delivery_target: float = 0.95
    rate_bisection_steps: int = 6
    rate_floor: float = 1e-4
    drain_fraction: float = 0.5
    flood_slot_budget: int = 200
    calibration_floods: int = 20
    calibration_origin_fraction: float = 0.25
    trace_floods: bool = False

    def __post_init__(self):
        problems = []
        if self.n < 1:
            problems.append(f"n must be >= 1, got {self.n}")
        if self.w <= 0:
            problems.append(f"w must be > 0, got {self.w}")
        if self.s_rreq <= 0:
            problems.append(f"s_rreq must be > 0, got {self.s_rreq}")
        if self.delta < 0:
            problems.append(f"delta must be >= 0, got {self.delta}")
        if not 0 <= self.nu <= 1:
            problems.append(f"nu must lie in [0, 1], got {self.nu}")
        if not 0 < self.theta < 1:
            problems.append(f"theta must lie in (0, 1), got {self.theta}")
        if self.area_coeff <= 0:
            problems.append(f"area_coeff must be > 0, got {self.area_coeff}")
        if not 0 <= self.seed < 2 ** 64:
            problems.append(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.success_mode not in SUCCESS_MODES:
            problems.append(
                f"success_mode must be one of {SUCCESS_MODES}, got {self.success_mode!r}"
            )
        if not 0 <= self.warmup_fraction < 1:
            problems.append("warmup_fraction must lie in [0, 1)")
        if not 0 < self.delivery_target <= 1:
            problems.append("delivery_target must lie in (0, 1]")
        if self.rate_bisection_steps < 0:
            problems.append("rate_bisection_steps must be >= 0")
        if not 0 < self.rate_floor <= 1:
            problems.append("rate_floor must lie in (0, 1]")
        if self.drain_fraction < 0:
            problems.append("drain_fraction must be >= 0")
        if self.flood_slot_budget < 1:
            problems.append("flood_slot_budget must be >= 1")
        if self.calibration_floods < 1:
            problems.append("calibration_floods must be >= 1")
        if not 0 < self.calibration_origin_fraction <= 1:
            problems.append("calibration_origin_fraction must lie in (0, 1]")

        if problems:
            raise InvalidConfigError("Invalid NetworkConfig: " + "; ".join(problems))

    @property
    def slot_length(self) -> float:
        """delta t = S_RREQ / W, always derived."""
        return self.s_rreq / self.w

    @property
    def reception_area(self) -> float:
        return min(1.0, self.area_coeff / self.n)

    @property
    def tau(self) -> float:
        return self.tau_model.tau(self.n)

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> Dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (TauModel, GModel)):
                value = value.to_string()
            out[f.name] = value
        out["gamma"] = self.gmodel.gamma
        return out

    @classmethod
    def field_names(cls):
        return {f.name for f in dataclasses.fields(cls)} | {"gamma"}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "NetworkConfig":
        """Build a config from flat key/value pairs; unknown keys are an error."""
        unknown = set(mapping) - cls.field_names()
        if unknown:
            msg = f"Unknown NetworkConfig keys: {sorted(unknown)}."
            msg += f" Known keys: {sorted(cls.field_names())}"
            raise InvalidConfigError(msg)

        kw = {k: coerce_value(v) for k, v in mapping.items()}
        gamma = float(kw.pop("gamma", 1.0))
        if "tau_model" in kw and not isinstance(kw["tau_model"], TauModel):
            kw["tau_model"] = parse_tau_model(kw["tau_model"])
        gmodel = kw.get("gmodel", IdentityG())
        if not isinstance(gmodel, GModel):
            gmodel = parse_gmodel(str(gmodel))
        kw["gmodel"] = gmodel.with_gamma(gamma)

        for name in ("n", "seed", "rate_bisection_steps", "flood_slot_budget",
                     "calibration_floods"):
            if name in kw:
                kw[name] = _as_int(name, kw[name])
        if "trace_floods" in kw:
            kw["trace_floods"] = _as_bool(kw["trace_floods"])
        return cls(**kw)


def _as_int(name, value) -> int:
    if isinstance(value, float) and not value.is_integer():
        raise InvalidConfigError(f"{name} must be an integer, got {value}")
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"{name} must be an integer, got {value!r}") from exc


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


def coerce_value(value):
    """Turn config strings into numbers where possible, like the CLI does."""
    if not isinstance(value, str):
        return value
    value = value.strip()
    try:
        return int(value)
    except ValueError:
        pass
    try:
        number = float(value)
    except ValueError:
        return value
    return int(number) if number.is_integer() and "." not in value else number


def read_flat_config(path) -> Dict[str, str]:
    """Read a flat ``key=value`` file (``#`` comments allowed)."""
    try:
        loaded = anyconfig.load(str(path), ac_parser="properties")
    except Exception as exc:
        raise InvalidConfigError(f"Could not read config file {path}: {exc}") from exc
    out = {str(k).strip(): v for k, v in dict(loaded or {}).items()}
    logger.debug("Read %d keys from %s", len(out), path)
    return out
