"""Reference curves, regime classification and log-log scaling fits."""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from .config import TauModel
from .errors import DomainError, FitError
from .rdp.analysis import GModel, g_eval

logger = logging.getLogger(__name__)

RDP_LIMITED = "rdp_limited"
INTERFERENCE_LIMITED = "interference_limited"
INDETERMINATE = "indeterminate"

DEFAULT_SLOPE_THRESHOLD = -0.1
DEFAULT_THETA_FACTOR = 4.0

Points = Union[Mapping[float, float], Iterable[Tuple[float, float]]]


def _as_points(points: Points) -> List[Tuple[float, float]]:
    if isinstance(points, Mapping):
        points = points.items()
    return sorted((float(n), float(v)) for n, v in points)


def dormancy_bound(w: float, tau: float, xi: float) -> float:
    """W tau / xi: a node is in D for tau slots out of every tau + xi."""
    if xi <= 0:
        raise DomainError(f"xi must be > 0, got {xi}")
    return w * tau / xi


def interference_bound(w: float, n: int) -> float:
    """W / sqrt(n ln n)."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    return w / math.sqrt(n * math.log(n))


def rdp_term(tau_model: TauModel, gmodel: GModel, n: int) -> float:
    """tau(n) G(1/n)."""
    return tau_model.tau(n) * g_eval(gmodel, 1.0 / n, n)


def regime_of_point(tau: float, xi: float, n: int) -> str:
    """Which bound binds at one measured point: tau / xi against 1 / sqrt(n ln n)."""
    if dormancy_bound(1.0, tau, xi) < interference_bound(1.0, n):
        return RDP_LIMITED
    return INTERFERENCE_LIMITED


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    points: Tuple[Tuple[float, float], ...]
    stderr: float = float("nan")

    def predict(self, n: float) -> float:
        return math.exp(self.intercept) * n ** self.slope

    def to_dict(self) -> dict:
        out = asdict(self)
        out["points"] = [list(p) for p in self.points]
        return out


def fit_exponent(points: Points) -> ScalingFit:
    """Ordinary least squares of ln(value) on ln(n)."""
    pts = _as_points(points)
    if len(pts) < 3:
        raise FitError(f"an exponent fit needs at least 3 points, got {len(pts)}")
    if any(n <= 0 or v <= 0 or not math.isfinite(v) for n, v in pts):
        raise FitError("an exponent fit needs positive finite n and values")
    if len({n for n, _ in pts}) < 2:
        raise FitError("an exponent fit needs at least two distinct n")

    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    res = stats.linregress(x, y)
    r_squared = min(1.0, max(0.0, float(res.rvalue) ** 2))
    if np.ptp(y) == 0:
        r_squared = 1.0
    return ScalingFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=r_squared,
        points=tuple(pts),
        stderr=float(res.stderr),
    )


@dataclass(frozen=True)
class RegimeVerdict:
    """Regime verdict over a probe range.

    ``lhs`` is tau(n) G(1/n) and ``rhs`` 1 / sqrt(n ln n) at every probe;
    the verdict follows the fitted log-log slope of lhs / rhs.
    """

    regime: str
    n_probe: Tuple[int, ...]
    lhs: Tuple[float, ...]
    rhs: Tuple[float, ...]
    slope: float
    slope_interval: Tuple[float, float]
    threshold: float
    predicted: Tuple[float, ...]

    def predicted_curve(self) -> Dict[int, float]:
        return dict(zip(self.n_probe, self.predicted))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["predicted_curve"] = {str(k): v for k, v in self.predicted_curve().items()}
        return out


def predicted_throughput(regime: str, w: float, tau_model: TauModel, gmodel: GModel, n: int) -> float:
    """Reference throughput up to a constant: W tau(n) G(1/n) when route
    discovery limits, W / sqrt(n ln n) when interference does, the smaller
    of both when undecided."""
    rdp = w * rdp_term(tau_model, gmodel, n)
    interference = interference_bound(w, n)
    if regime == RDP_LIMITED:
        return rdp
    if regime == INTERFERENCE_LIMITED:
        return interference
    return min(rdp, interference)


def classify_regime(
    tau_model: TauModel,
    gmodel: GModel,
    n_probe: Sequence[int],
    threshold: float = DEFAULT_SLOPE_THRESHOLD,
    confidence: float = 0.95,
    w: float = 1.0,
) -> RegimeVerdict:
    """Decide o(.) against Omega(.) from the trend of lhs / rhs.

    A slope below ``threshold`` means lhs vanishes against rhs
    (rdp_limited); otherwise interference limits. When the
    ``confidence`` interval of the slope contains the threshold the
    verdict is indeterminate.
    """
    probes = sorted({int(n) for n in n_probe})
    if len(probes) < 4:
        raise FitError(f"need at least 4 distinct probe sizes, got {len(probes)}")
    if probes[0] < 2 or probes[-1] / probes[0] < 100:
        raise FitError("probe sizes must be >= 2 and span at least two decades")

    lhs = [rdp_term(tau_model, gmodel, n) for n in probes]
    rhs = [interference_bound(1.0, n) for n in probes]
    if any(v <= 0 for v in lhs):
        raise FitError("tau(n) G(1/n) vanishes at a probe size")

    fit = fit_exponent([(n, a / b) for n, a, b in zip(probes, lhs, rhs)])
    if math.isfinite(fit.stderr):
        t = stats.t.ppf(0.5 + confidence / 2.0, df=len(probes) - 2)
        interval = (fit.slope - t * fit.stderr, fit.slope + t * fit.stderr)
    else:
        interval = (fit.slope, fit.slope)

    if interval[0] < threshold <= interval[1] and interval[0] != interval[1]:
        regime = INDETERMINATE
    elif fit.slope < threshold:
        regime = RDP_LIMITED
    else:
        regime = INTERFERENCE_LIMITED

    logger.info("regime %s: slope of lhs/rhs %.3f (threshold %.2f)", regime, fit.slope, threshold)
    return RegimeVerdict(
        regime=regime,
        n_probe=tuple(probes),
        lhs=tuple(lhs),
        rhs=tuple(rhs),
        slope=fit.slope,
        slope_interval=(float(interval[0]), float(interval[1])),
        threshold=threshold,
        predicted=tuple(predicted_throughput(regime, w, tau_model, gmodel, n) for n in probes),
    )


def log_probes(n_min: int, n_max: int, count: int = 7) -> List[int]:
    """Geometrically spaced probe sizes between n_min and n_max."""
    if n_min < 2 or n_max <= n_min:
        raise DomainError("need 2 <= n_min < n_max")
    grid = np.unique(np.round(np.geomspace(n_min, n_max, count)).astype(int))
    return [int(n) for n in grid]


@dataclass(frozen=True)
class ThetaCheck:
    spread: float
    ratios: Tuple[float, ...]
    factor: float

    @property
    def consistent(self) -> bool:
        return self.spread < self.factor


def check_theta(
    points: Points, reference: Points, factor: float = DEFAULT_THETA_FACTOR
) -> ThetaCheck:
    """Spread max/min of value / reference over a shared n grid.

    Constant factors cancel, so only the shape of the curves is compared.
    """
    pts = _as_points(points)
    ref = _as_points(reference)
    if [n for n, _ in pts] != [n for n, _ in ref]:
        raise FitError("points and reference curve are not on the same n grid")
    if not pts:
        raise FitError("no points to compare")
    if any(v <= 0 for _, v in ref) or any(v <= 0 for _, v in pts):
        raise FitError("values and reference must be positive")
    ratios = tuple(v / r for (_, v), (_, r) in zip(pts, ref))
    return ThetaCheck(spread=max(ratios) / min(ratios), ratios=ratios, factor=factor)


def reference_curves(
    n_values: Sequence[int], w: float, tau_model: TauModel, gmodel: GModel
) -> pd.DataFrame:
    rows = []
    for n in n_values:
        g = g_eval(gmodel, 1.0 / n, n)
        rows.append(
            {
                "n": int(n),
                "tau": tau_model.tau(n),
                "g_one_over_n": g,
                "xi_reference": 1.0 / g if g > 0 else math.inf,
                "dormancy": w * rdp_term(tau_model, gmodel, n),
                "interference": interference_bound(w, n),
            }
        )
    df = pd.DataFrame(rows)
    df["predicted"] = df[["dormancy", "interference"]].min(axis=1)
    return df


INTERFERENCE_SLACK = 1.1
FLAT_RATIO_SLOPE = 0.1


@dataclass(frozen=True)
class GlobalConstant:
    """One c for T <= c W / sqrt(n ln n), taken from the smaller half of the
    sizes and checked on the larger half with a slack, and the log-log trend
    of T sqrt(n ln n) / W over every point."""

    c: float
    slope: float
    violations: int
    checked: int
    ok: bool


def fit_global_constant(
    points: Points,
    w: float = 1.0,
    slack: float = INTERFERENCE_SLACK,
    max_slope: float = FLAT_RATIO_SLOPE,
) -> GlobalConstant:
    """Held-out check that a single constant bounds throughput at every n.

    ``ok`` needs no held-out point above ``slack * c`` and a ratio slope of
    at most ``max_slope``.
    """
    pts = [(n, v) for n, v in _as_points(points) if v > 0]
    sizes = sorted({n for n, _ in pts})
    if len(pts) < 3 or len(sizes) < 2:
        raise FitError("need at least 3 positive throughput points over 2 sizes")
    ratios = [(n, v / interference_bound(w, int(n))) for n, v in pts]
    cut = sizes[(len(sizes) - 1) // 2]
    c = max(r for n, r in ratios if n <= cut)
    held_out = [r for n, r in ratios if n > cut]
    violations = sum(r > slack * c for r in held_out)
    slope = fit_exponent(ratios).slope
    return GlobalConstant(
        c=c,
        slope=slope,
        violations=int(violations),
        checked=len(held_out),
        ok=bool(violations == 0 and slope <= max_slope),
    )
