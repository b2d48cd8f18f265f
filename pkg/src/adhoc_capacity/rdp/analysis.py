"""Route discovery analytics.

Success functions G(f), the bounds on the unconditional success
probability Q, Scheme A's Q', the arrival-rate fixed point and the
expected length xi(n) of the N state.
"""
import dataclasses
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from ..errors import DivergenceError, DomainError, NonMonotoneError

logger = logging.getLogger(__name__)

LATTICE_STEP = 1e-3
_TOL = 1e-12


class GModel(ABC):
    """Probability that an RDP succeeds given the fraction f of nodes it reached.

    Subclasses implement ``_g`` on arrays of fractions in [0, 1]. ``gamma``
    is the median/mean constant used by ``q_lower_bound``.
    """

    kind: str
    gamma: float

    @abstractmethod
    def _g(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError("Must be implemented by subclass")

    @abstractmethod
    def to_string(self) -> str:
        raise NotImplementedError("Must be implemented by subclass")

    def at(self, n: Optional[int]) -> "GModel":
        """The model with any n-dependent parameter fixed at ``n``."""
        return self

    def with_gamma(self, gamma: float) -> "GModel":
        return dataclasses.replace(self, gamma=gamma)

    def __call__(self, f, n: Optional[int] = None):
        return g_eval(self, f, n)


def _check_gamma(gamma):
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")


@dataclass(frozen=True)
class IdentityG(GModel):
    """G(f) = f: nothing is known about the destination."""

    gamma: float = 1.0
    kind = "identity"

    def __post_init__(self):
        _check_gamma(self.gamma)

    def _g(self, f):
        return f

    def to_string(self):
        return "identity"


@dataclass(frozen=True)
class KTargetG(GModel):
    """G(f) = 1 - (1 - f)^k: success once any of k route holders is reached.

    ``k = coeff * n**power``; ``power = 0.5`` gives the "known to
    sqrt(n) nodes" model.
    """

    coeff: float = 1.0
    power: float = 0.0
    gamma: float = 1.0
    kind = "k_target"

    def __post_init__(self):
        if self.coeff <= 0:
            raise DomainError(f"k must be > 0, got {self.coeff}")
        _check_gamma(self.gamma)

    def k(self, n: Optional[int] = None) -> float:
        if self.power == 0:
            return self.coeff
        if n is None:
            msg = "k_target model depends on n"
            msg += f" (k = {self.coeff:g} * n^{self.power:g}); pass n"
            raise DomainError(msg)
        return self.coeff * n ** self.power

    def at(self, n):
        if self.power == 0:
            return self
        return KTargetG(coeff=self.k(n), power=0.0, gamma=self.gamma)

    def _g(self, f):
        # expm1/log1p keep G accurate for f ~ 1/n
        with np.errstate(divide="ignore"):
            return -np.expm1(self.k() * np.log1p(-f))

    def to_string(self):
        if self.power == 0:
            return f"k_target:{self.coeff:g}"
        return f"k_target:{self.coeff:g}:{self.power:g}"


@dataclass(frozen=True)
class StepRepairG(GModel):
    """G(f) = 1 for any f > 0: broken links are repaired immediately."""

    gamma: float = 1.0
    kind = "step_repair"

    def __post_init__(self):
        _check_gamma(self.gamma)

    def _g(self, f):
        return np.where(f > 0, 1.0, 0.0)

    def to_string(self):
        return "step_repair"


@dataclass(frozen=True)
class TableG(GModel):
    """Piecewise linear G through sample points (f, G(f))."""

    points: Tuple[Tuple[float, float], ...] = ((0.0, 0.0), (1.0, 1.0))
    gamma: float = 1.0
    kind = "table"

    def __post_init__(self):
        if len(self.points) < 2:
            raise DomainError("table G needs at least two points")
        pts = tuple(sorted((float(f), float(g)) for f, g in self.points))
        if any(not 0 <= f <= 1 for f, _ in pts):
            raise DomainError("table G abscissae must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        _check_gamma(self.gamma)

    def _g(self, f):
        xs, ys = zip(*self.points)
        return np.interp(f, xs, ys)

    def to_string(self):
        return "table:" + ";".join(f"{f:g}={g:g}" for f, g in self.points)


def parse_gmodel(text: str, gamma: float = 1.0) -> GModel:
    """Parse ``identity``, ``k_target:<k>[:<power>]``, ``step_repair`` or
    ``table:<f=g;...>``."""
    kind, _, rest = str(text).strip().partition(":")
    try:
        if kind == "identity":
            return IdentityG(gamma=gamma)
        if kind == "step_repair":
            return StepRepairG(gamma=gamma)
        if kind == "k_target":
            parts = [float(p) for p in rest.split(":") if p]
            if not 1 <= len(parts) <= 2:
                raise ValueError("expected k_target:<k>[:<power>]")
            return KTargetG(*parts, gamma=gamma)
        if kind == "table":
            pairs = [item.split("=", 1) for item in rest.split(";") if item]
            return TableG(tuple((float(f), float(g)) for f, g in pairs), gamma=gamma)
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"Cannot parse G model {text!r}: {exc}") from exc

    raise DomainError(f"Unknown G model {text!r}")


def g_eval(model: GModel, f, n: Optional[int] = None):
    """Evaluate G(f); f may be a scalar or an array of fractions in [0, 1]."""
    arr = np.asarray(f, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise DomainError(f"G is defined on [0, 1], got f={f}")
    out = np.clip(model.at(n)._g(arr), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def validate_gmodel(model: GModel, n: Optional[int] = None) -> List[str]:
    """List every violated property of G on a 1e-3 lattice; empty means ok.

    Checks G(0) = 0, G(1) = 1, monotonicity, G(f) >= f and concavity.
    Never raises for a violated property.
    """
    violations = []
    try:
        lattice = np.linspace(0.0, 1.0, int(round(1 / LATTICE_STEP)) + 1)
        g = np.asarray(model.at(n)._g(lattice), dtype=float)
    except DomainError as exc:
        return [str(exc)]

    if abs(g[0]) > _TOL:
        violations.append(f"G(0) = {g[0]:.6g}, expected 0")
    if abs(g[-1] - 1) > _TOL:
        violations.append(f"G(1) = {g[-1]:.6g}, expected 1")

    steps = np.diff(g)
    if np.any(steps < -_TOL):
        where = lattice[1:][steps < -_TOL][0]
        violations.append(f"G decreases near f = {where:.3f}")

    below = g < lattice - 1e-9
    if np.any(below):
        where = lattice[below][0]
        violations.append(f"G(f) < f at f = {where:.3f}")

    # second differences; the step model's jump at 0 is concave too
    curvature = np.diff(g, 2)
    if np.any(curvature > 1e-9):
        where = lattice[1:-1][curvature > 1e-9][0]
        violations.append(f"G is not concave near f = {where:.3f}")

    return violations


def mean_reach(nbar_r: float, lam: float, n: int) -> float:
    """Mean reach f = n_r / (lambda (n - 1)), clamped to [0, 1]."""
    if lam <= 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    return min(1.0, max(0.0, nbar_r / (lam * (n - 1))))


def q_upper_bound(model: GModel, nbar_r: float, lam: float, n: int) -> float:
    """Q <= G(n_r / (lambda (n - 1)))."""
    return g_eval(model, mean_reach(nbar_r, lam, n), n)


def q_lower_bound(model: GModel, nbar_r: float, lam: float, n: int) -> float:
    """Q >= G(gamma n_r / (lambda n)) / 2 under the median assumption."""
    if lam <= 0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    arg = min(1.0, max(0.0, model.gamma * nbar_r / (lam * n)))
    return 0.5 * g_eval(model, arg, n)


def scheme_a_qprime(q_fn: Callable[[float], float], lam: float, theta: float) -> float:
    """Q'(lambda) = Q(lambda / theta) when a fraction theta of slots is for RDPs."""
    if not 0 < theta < 1:
        raise DomainError(f"theta must lie in (0, 1), got {theta}")
    return float(q_fn(lam / theta))


def theta_scaled_q(q_fn: Callable[[float], float], theta: float):
    """Return Q' as a function of lambda."""
    if not 0 < theta < 1:
        raise DomainError(f"theta must lie in (0, 1), got {theta}")
    return lambda lam: scheme_a_qprime(q_fn, lam, theta)


def expected_attempts(q: float) -> float:
    """N_avg = 1 / Q."""
    if q <= 0:
        raise DivergenceError("success probability is 0: the route is never found")
    if q > 1:
        raise DomainError(f"q must lie in (0, 1], got {q}")
    return 1.0 / q


def solve_lambda(
    n: int,
    nu: float,
    tau: float,
    q_prime_fn: Callable[[float], float],
    rtol: float = 1e-9,
    maxiter: int = 200,
    probes: int = 65,
) -> float:
    """Total RDP arrival rate: the fixed point of
    ``F(lambda) = n nu / (1 + Q'(lambda) tau nu)``.

    F maps ``[n nu / (1 + tau nu), n nu]`` into itself and is nondecreasing
    when Q' is nonincreasing, so bisection on ``lambda - F(lambda)``
    always converges.

    Parameters
    ----------
    n : int
        Node count.
    nu : float
        Per node initiation rate.
    tau : float
        Expected route lifetime in slots.
    q_prime_fn : callable
        lambda -> Q'(lambda), nonincreasing with values in [0, 1].

    Returns
    -------
    lam : float
        The fixed point, with ``|lam - F(lam)| < rtol * n * nu``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if nu < 0 or tau < 0:
        raise DomainError("nu and tau must be >= 0")
    top = n * nu
    if top == 0:
        return 0.0

    def fixed_map(lam):
        q = float(q_prime_fn(lam))
        if not -_TOL <= q <= 1 + _TOL:
            raise DomainError(f"Q'({lam:g}) = {q:g} lies outside [0, 1]")
        return top / (1 + min(1.0, max(0.0, q)) * tau * nu)

    lo = top / (1 + tau * nu)
    grid = np.linspace(lo, top, probes)
    qs = np.array([float(q_prime_fn(x)) for x in grid])
    if np.any(np.diff(qs) > 1e-12):
        where = grid[1:][np.diff(qs) > 1e-12][0]
        raise NonMonotoneError(f"Q' increases near lambda = {where:g}")

    def residual(lam):
        return lam - fixed_map(lam)

    r_lo, r_hi = residual(lo), residual(top)
    if abs(r_lo) <= rtol * top:
        return lo
    if abs(r_hi) <= rtol * top:
        return top

    lam = optimize.bisect(
        residual, lo, top, xtol=rtol * top * 1e-3, rtol=4 * np.finfo(float).eps,
        maxiter=maxiter,
    )
    logger.debug("lambda fixed point %g for n=%d nu=%g tau=%g", lam, n, nu, tau)
    return float(lam)


def xi_from_rates(nu: float, q_prime: float) -> float:
    """xi = 1 / (nu Q'): 1/Q' attempts spaced 1/nu slots apart."""
    if nu <= 0:
        raise DomainError(f"nu must be > 0, got {nu}")
    if q_prime <= 0:
        raise DivergenceError("Q' = 0: the N state never ends")
    return 1.0 / (nu * q_prime)


def xi_reference(model: GModel, n: int) -> float:
    """The Theta-reference 1 / G(1/n) for the N state length."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    g = g_eval(model, 1.0 / n, n)
    if g <= 0:
        raise DivergenceError(f"G(1/{n}) = 0, xi diverges")
    return 1.0 / g


@dataclass(frozen=True)
class RdpRates:
    lam: float
    q: float
    q_prime: float
    n_avg: float
    xi: float


def rdp_rates(
    n: int,
    nu: float,
    tau: float,
    theta: float,
    q_fn: Callable[[float], float],
) -> RdpRates:
    """Solve Scheme A end to end: lambda, Q, Q', N_avg and xi."""
    q_prime_fn = theta_scaled_q(q_fn, theta)
    lam = solve_lambda(n, nu, tau, q_prime_fn)
    q_prime = q_prime_fn(lam)
    q = float(q_fn(lam))
    return RdpRates(
        lam=lam,
        q=q,
        q_prime=q_prime,
        n_avg=expected_attempts(q_prime),
        xi=xi_from_rates(nu, q_prime),
    )


def load_q_function(model: GModel, nbar_r: float, n: int, f_cap: float = 1.0):
    """Q(lambda) = G(min(f_cap, n_r / (lambda (n - 1)))): the mean reach
    shrinks as more discoveries share the RDP slots."""

    def q_fn(lam):
        if lam <= 0:
            return g_eval(model, f_cap, n)
        return g_eval(model, min(f_cap, mean_reach(nbar_r, lam, n)), n)

    return q_fn


def xi_bounds(
    model: GModel, n: int, nu: float, tau: float, theta: float, nbar_r: float
) -> Tuple[float, float, float]:
    """(lower, reference, upper) for xi at one n.

    The two ends solve the arrival-rate equation with Q taken at its
    upper and lower bounds respectively.
    """
    def upper_q(lam):
        return q_upper_bound(model, nbar_r, lam, n) if lam > 0 else 1.0

    def lower_q(lam):
        return q_lower_bound(model, nbar_r, lam, n) if lam > 0 else 0.5

    fast = rdp_rates(n, nu, tau, theta, upper_q)
    slow = rdp_rates(n, nu, tau, theta, lower_q)
    return fast.xi, xi_reference(model, n), slow.xi


def empirical_gmodel(
    samples: Iterable[Tuple[float, bool]], bins: int = 10, gamma: float = 1.0
) -> TableG:
    """Fit a table G from (reach, success) observations.

    Success rates are averaged per reach bin, then forced to be
    nondecreasing and no lower than f, and anchored at (0, 0), (1, 1).
    """
    data = np.array([(float(f), float(ok)) for f, ok in samples])
    if data.size == 0:
        raise DomainError("need at least one (f, success) sample")
    edges = np.linspace(0.0, 1.0, bins + 1)
    centers, rates = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (data[:, 0] >= lo) & (data[:, 0] <= hi if hi == 1 else data[:, 0] < hi)
        if mask.any():
            centers.append(data[mask, 0].mean())
            rates.append(data[mask, 1].mean())
    xs = np.array([0.0] + centers + [1.0])
    ys = np.maximum.accumulate(np.maximum(np.array([0.0] + rates + [1.0]), xs))
    ys[0] = 0.0
    keep = np.concatenate([[True], np.diff(xs) > 0])
    return TableG(tuple(zip(xs[keep], ys[keep])), gamma=gamma)


def table_q_function(points: Sequence[Tuple[float, float]]):
    """Q'(lambda) interpolated from (lambda, Q') samples, clamped at the ends."""
    pts = sorted((float(a), float(b)) for a, b in points)
    if not pts:
        raise DomainError("Q' table is empty")
    xs, ys = zip(*pts)
    return lambda lam: float(np.interp(lam, xs, ys))


def constant_q_function(value: float):
    if not 0 <= value <= 1:
        raise DomainError(f"Q' must lie in [0, 1], got {value}")
    return lambda lam: float(value)
