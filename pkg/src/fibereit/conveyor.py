"""Optical conveyor-belt kinematics.

Two counter-propagating lattice beams with instantaneous frequency
difference df(t) drive a moving standing wave with velocity

    v(t) = lambda * df(t) / 2.

The transported distance is (lambda/2) * integral of df, which is exact in
closed form for the piecewise-linear ramps used here (trapezoid per
segment).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .units import LATTICE_WAVELENGTH


@dataclass(frozen=True)
class ConveyorRamp:
    """Piecewise-linear frequency-difference ramp df(t).

    times     : knot times (s), strictly increasing, starting at 0
    detunings : df at each knot (Hz)
    wavelength: lattice wavelength (m)
    """

    times: np.ndarray
    detunings: np.ndarray
    wavelength: float = LATTICE_WAVELENGTH

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.detunings, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "detunings", f)
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")
        if t.ndim != 1 or t.size < 2 or f.shape != t.shape:
            raise ValueError("ramp needs matching 1-d knot arrays with >= 2 knots")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("knot times must start at 0 and be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f))):
            raise ValueError("ramp knots must be finite")

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @classmethod
    def linear(cls, peak_hz: float, duration: float,
               wavelength: float = LATTICE_WAVELENGTH) -> "ConveyorRamp":
        """Ramp rising linearly from 0 to ``peak_hz`` over ``duration``."""
        return cls(np.array([0.0, duration]), np.array([0.0, peak_hz]), wavelength)


def velocity_at(t, ramp: ConveyorRamp):
    """Lattice velocity lambda * df(t) / 2 (m/s) at time ``t`` within the ramp."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > ramp.duration):
        raise ValueError(f"t outside ramp interval [0, {ramp.duration}]")
    df = np.interp(t, ramp.times, ramp.detunings)
    v = 0.5 * ramp.wavelength * df
    return float(v) if v.ndim == 0 else v


def displacement(ramp: ConveyorRamp) -> float:
    """Total transported distance (m), exact for piecewise-linear ramps."""
    return 0.5 * ramp.wavelength * float(np.trapz(ramp.detunings, ramp.times))


def sample(ramp: ConveyorRamp, n: int = 101):
    """Sample the ramp on ``n`` uniform times.

    Returns (t, df, v, x) arrays with x the cumulative displacement, using
    the same trapezoid rule as :func:`displacement` so x[-1] matches it
    when the sample grid contains the knots.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    t = np.union1d(np.linspace(0.0, ramp.duration, n), ramp.times)
    df = np.interp(t, ramp.times, ramp.detunings)
    v = 0.5 * ramp.wavelength * df
    x = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])
    return t, df, v, x
