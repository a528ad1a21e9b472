"""Quadratic Stark shift <-> electric field conversion.

Convention: shift = alpha * E^2 / 2 with alpha in MHz cm^2/V^2 and E in
V/cm, so the shift comes out in plain MHz (not angular frequency).  Some
references fold the 1/2 into alpha; this module does not.
"""

from __future__ import annotations

import math

#: Scalar polarizability of the 29S_1/2 state (MHz cm^2/V^2).
ALPHA_29S = 1.14


def shift_from_field(field: float, alpha: float = ALPHA_29S) -> float:
    """Stark shift (MHz) of a state with polarizability ``alpha`` in a DC
    field of ``field`` V/cm."""
    if not math.isfinite(field) or field < 0:
        raise ValueError("field must be finite and >= 0")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return 0.5 * alpha * field * field


def field_from_shift(shift: float, alpha: float = ALPHA_29S) -> float:
    """Electric field (V/cm) producing a quadratic Stark shift of
    ``shift`` MHz; inverse of :func:`shift_from_field` on [0, inf)."""
    if not math.isfinite(shift) or shift < 0:
        raise ValueError("shift must be finite and >= 0")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return math.sqrt(2.0 * shift / alpha)
