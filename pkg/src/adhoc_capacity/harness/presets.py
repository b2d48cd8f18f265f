"""Named (tau model, G model) scenarios."""
from typing import Dict, Tuple

from ..config import ConstantTau, InverseSqrtTau, TauModel
from ..errors import InvalidConfigError
from ..rdp.analysis import GModel, IdentityG, KTargetG, StepRepairG

DEFAULT_TAU = 50.0
DEFAULT_TAU_COEFF = 2000.0
DEFAULT_K_COEFF = 1.0


def scenario_presets(
    name: str,
    tau: float = DEFAULT_TAU,
    tau_coeff: float = DEFAULT_TAU_COEFF,
    k_coeff: float = DEFAULT_K_COEFF,
) -> Tuple[TauModel, GModel]:
    """The three reference scenarios.

    example1
        Routes live a fixed time and nothing is known about the destination:
        constant tau, G(f) = f.
    example2
        Routes break as links along them do, tau = c / sqrt(n), and the
        destination is known to about sqrt(n) nodes: G(f) = 1 - (1 - f)^k
        with k = c' sqrt(n).
    example3
        Same route lifetime, but broken routes are repaired at once, so any
        discovery that reaches someone succeeds.
    """
    presets: Dict[str, Tuple[TauModel, GModel]] = {
        "example1": (ConstantTau(tau), IdentityG()),
        "example2": (InverseSqrtTau(tau_coeff), KTargetG(coeff=k_coeff, power=0.5)),
        "example3": (InverseSqrtTau(tau_coeff), StepRepairG()),
    }
    try:
        return presets[name]
    except KeyError:
        msg = f"Unknown scenario {name!r}."
        msg += f" Expected one of {sorted(presets)} or custom"
        raise InvalidConfigError(msg)


SCENARIOS = ("example1", "example2", "example3", "custom")
