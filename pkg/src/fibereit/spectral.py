"""Steady-state spectral models for the probe transition.

Two closed forms are provided: a plain Lorentzian absorption profile

    T(delta) = exp(-OD / (1 + 4 (delta/gamma)^2)),

and the weak-probe ladder-EIT transmission

    T(delta) = exp(-OD * Im chi),
    chi = i gamma * (gamma - 2i D + |Omega_c|^2 / (gamma_ryd - 2i (Delta_c + D)))^-1,

with D the probe detuning relative to the fitted line-center ``offset``.
``gamma`` is the FWHM-style natural linewidth of the probe transition, so
D = gamma/2 is the half-absorption point and the Omega_c = 0 limit of the EIT
form reduces exactly to the Lorentzian profile.

All frequency-like quantities are angular frequencies (rad/s); see
:mod:`fibereit.units`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .units import TWO_PI, mhz_to_angular


@dataclass(frozen=True)
class EitParams:
    """Parameters of the ladder-EIT transmission model.

    od          : optical depth at line center (dimensionless, >= 0)
    gamma       : probe-transition decay rate (rad/s, > 0)
    omega_c     : control Rabi frequency (rad/s, >= 0)
    delta_c     : control detuning (rad/s)
    gamma_ryd   : total Rydberg decay/dephasing rate (rad/s, > 0)
    offset      : global probe-frequency offset, the fitted line-center
                  position on the detuning axis (rad/s)
    """

    od: float
    gamma: float
    omega_c: float = 0.0
    delta_c: float = 0.0
    gamma_ryd: float = mhz_to_angular(1.0)
    offset: float = 0.0

    def __post_init__(self) -> None:
        problems = []
        for name in ("od", "gamma", "omega_c", "delta_c", "gamma_ryd", "offset"):
            if not np.isfinite(getattr(self, name)):
                problems.append(f"{name} must be finite")
        if not problems:
            if self.od < 0:
                problems.append("od must be >= 0")
            if self.gamma <= 0:
                problems.append("gamma must be > 0")
            if self.omega_c < 0:
                problems.append("omega_c must be >= 0")
            if self.gamma_ryd <= 0:
                problems.append("gamma_ryd must be > 0")
        if problems:
            raise ValueError("invalid EitParams: " + "; ".join(problems))

    @property
    def eit_peak(self) -> float:
        """Detuning of the two-photon resonance (rad/s)."""
        return self.offset - self.delta_c


@dataclass(frozen=True)
class RydbergConstants:
    """Fixed atomic rates used by derived-quantity reports.

    gamma_29s : natural linewidth of the 29S Rydberg state, 2 pi / (21.7 us).
    gamma_d2  : default probe (D2) natural linewidth; configurable because
                the spectral model itself treats gamma as a free constant.
    """

    gamma_29s: float = TWO_PI / 21.7e-6
    gamma_d2: float = mhz_to_angular(6.07)

    def __post_init__(self) -> None:
        if self.gamma_29s <= 0 or self.gamma_d2 <= 0:
            raise ValueError("RydbergConstants rates must be > 0")


def lorentzian_profile(x, fwhm: float):
    """Unit-peak Lorentzian 1 / (1 + 4 (x/fwhm)^2)."""
    return 1.0 / (1.0 + 4.0 * (np.asarray(x, dtype=float) / fwhm) ** 2)


def _check_finite(delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(delta)):
        raise ValueError("detuning must be finite")
    return delta


def transmission_od(delta, od: float, gamma: float):
    """Lorentzian absorption transmission exp(-od * L(delta)).

    ``delta`` may be a scalar or array (rad/s); the return value matches.
    """
    delta = _check_finite(delta)
    if not np.isfinite(od) or od < 0:
        raise ValueError("od must be finite and >= 0")
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError("gamma must be finite and > 0")
    out = np.exp(-od * lorentzian_profile(delta, gamma))
    return float(out) if np.isscalar(delta) or out.ndim == 0 else out


def susceptibility(delta, p: EitParams):
    """Complex dimensionless susceptibility of the ladder system.

    Im(chi) lies in [0, 1]; the denominator cannot vanish for valid
    parameters (gamma, gamma_ryd > 0).
    """
    delta = _check_finite(delta)
    d = delta - p.offset
    ryd = p.gamma_ryd - 2j * (p.delta_c + d)
    chi = 1j * p.gamma / (p.gamma - 2j * d + (p.omega_c ** 2) / ryd)
    return complex(chi) if np.ndim(chi) == 0 else chi


def transmission_eit(delta, p: EitParams):
    """Ladder-EIT transmission exp(-od * Im chi) at probe detuning ``delta``."""
    chi = susceptibility(delta, p)
    out = np.exp(-p.od * np.imag(chi))
    return float(out) if np.ndim(out) == 0 else out


def dephasing_excess(gamma_ryd: float, constants: RydbergConstants | None = None) -> float:
    """Decay/dephasing beyond the natural Rydberg linewidth.

    Returns gamma_ryd - gamma_29s (rad/s).  A negative result means the
    fitted rate fell below the natural linewidth; it is returned as-is with
    a warning so calibration problems stay visible.
    """
    if gamma_ryd < 0:
        raise ValueError("gamma_ryd must be >= 0")
    constants = constants or RydbergConstants()
    excess = gamma_ryd - constants.gamma_29s
    if excess < 0:
        warnings.warn("dephasing excess is negative (rate below natural linewidth)",
                      stacklevel=2)
    return excess
