"""Back out relative precisions from observed combining weights.

Only the ``rho_i == 0`` weights can be inverted in closed form; observed
weights are interpreted as optimal under that model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import InfeasibleWeights, InvalidParam


@dataclass(frozen=True)
class ImpliedPrecisions:
    ratio_c: float  # sigma_c / sigma_p
    ratio_i: float  # sigma_i / sigma_p


def _check_interior(kappa_i: float, kappa_c: float) -> None:
    w_price = 1.0 - kappa_i - kappa_c
    if kappa_i <= 0.0:
        raise InfeasibleWeights(
            f"kappa_i={kappa_i!r} is on the boundary: implies sigma_i -> inf",
            field="kappa_i",
            limit="sigma_i -> inf",
        )
    if kappa_c <= 0.0:
        raise InfeasibleWeights(
            f"kappa_c={kappa_c!r} is on the boundary: implies sigma_c -> inf",
            field="kappa_c",
            limit="sigma_c -> inf",
        )
    if kappa_i >= 1.0:
        raise InfeasibleWeights(
            f"kappa_i={kappa_i!r} is on the boundary: implies sigma_i -> 0",
            field="kappa_i",
            limit="sigma_i -> 0",
        )
    if kappa_c >= 1.0:
        raise InfeasibleWeights(
            f"kappa_c={kappa_c!r} is on the boundary: implies sigma_c -> 0",
            field="kappa_c",
            limit="sigma_c -> 0",
        )
    if w_price <= 0.0:
        raise InfeasibleWeights(
            f"price weight 1 - kappa_i - kappa_c = {w_price!r} is on the boundary: "
            "implies sigma_p -> inf",
            field="kappa_i+kappa_c",
            limit="sigma_p -> inf",
        )


def implied_ratios(kappa_i: float, kappa_c: float, rho: float) -> ImpliedPrecisions:
    """Return ``(sigma_c / sigma_p, sigma_i / sigma_p)`` implied by the weights.

    Raises :class:`InfeasibleWeights` for boundary weights; its ``limit``
    attribute names the degenerate sigma.
    """
    if not all(math.isfinite(x) for x in (kappa_i, kappa_c, rho)):
        raise InvalidParam("kappa_i, kappa_c and rho must be finite", field="kappa_i,kappa_c,rho")
    if not -1.0 < rho < 1.0:
        raise InfeasibleWeights(f"rho={rho!r} must lie strictly inside (-1, 1)", field="rho")
    _check_interior(kappa_i, kappa_c)

    a = 1.0 - kappa_i - 2.0 * kappa_c
    disc = a * a * rho * rho + 4.0 * (1.0 - kappa_i - kappa_c) * kappa_c
    if disc < 0.0:
        raise InfeasibleWeights(f"negative discriminant {disc!r}", field="kappa_c")
    ratio_c = (a * rho + math.sqrt(disc)) / (2.0 * kappa_c)

    inner = (1.0 - rho * rho) * kappa_c / ((1.0 + ratio_c * rho) * kappa_i)
    if not inner >= 0.0 or not math.isfinite(inner):
        raise InfeasibleWeights(
            f"weights imply a non-real intrinsic ratio (1 + ratio_c*rho = {1.0 + ratio_c * rho!r})",
            field="kappa_i",
        )
    ratio_i = math.sqrt(inner) * ratio_c
    if not (math.isfinite(ratio_c) and ratio_c >= 0.0):
        raise InfeasibleWeights(
            f"implied ratio_c={ratio_c!r} is not a valid precision ratio", field="kappa_c"
        )
    return ImpliedPrecisions(ratio_c=ratio_c, ratio_i=ratio_i)
