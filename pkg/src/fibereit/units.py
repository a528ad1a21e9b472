"""Unit conventions shared across the package.

All rates, detunings and Rabi frequencies are stored internally as angular
frequencies (rad/s).  Every I/O boundary (CLI, config files, CSV/JSON) speaks
plain "MHz", meaning omega / 2 pi.  Keeping a single internal convention
avoids silent factor-of-2-pi mistakes when linewidths, detunings and Rabi
frequencies are mixed in one formula.
"""

from __future__ import annotations

import math

TWO_PI = 2.0 * math.pi

#: Probe wavelength (m), Rb-87 D2 line.
PROBE_WAVELENGTH = 780e-9

#: Lattice / dipole-trap wavelength (m).
LATTICE_WAVELENGTH = 805e-9


def mhz_to_angular(f_mhz: float) -> float:
    """Convert a plain frequency in MHz to an angular frequency in rad/s."""
    return TWO_PI * 1e6 * f_mhz


def angular_to_mhz(omega: float) -> float:
    """Convert an angular frequency in rad/s to a plain frequency in MHz."""
    return omega / (TWO_PI * 1e6)
