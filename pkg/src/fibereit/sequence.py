"""Forward simulator for the pulsed probe sequence.

Each detuning is an independent experimental run: the probe stays at a fixed
frequency while the 10-us probe/hold cycle repeats ``n_reps`` times.  In
single-pulse mode every repetition records one probe pulse with the control
beam on; in two-pulse mode a second, control-off pulse directly follows, so
the two slots ("eit", "od") share the atom number of that repetition.

Atom loss is phenomenological.  The per-repetition optical depth is

    OD_n(d) = od0 * A(t_n) * s(d)^n,

with A(t) a continuous two-regime exponential (decay times tau1 then tau2,
switching at t_break) and s(d) = 1 - a_eff * L(d - loss_center) a
detuning-selective survival factor; L is a unit-peak Lorentzian of FWHM
``loss_width`` and a_eff is ``loss_amp`` boosted by ``eit_loss_boost``
whenever the control beam participates in the sequence.  The accumulated
selective loss burns a spectral hole that late repetitions see as a
transmission peak at ``loss_center``.

Detection draws Poisson photon counts from the pulse-energy photon budget,
giving an unbiased transmission estimate with shot-noise variance T/N.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c, h

from .spectral import EitParams, lorentzian_profile, susceptibility
from .units import PROBE_WAVELENGTH, mhz_to_angular

SLOT_EIT = "eit"
SLOT_OD = "od"

MODE_SINGLE = "single-pulse"
MODE_TWO = "two-pulse"


class ValidationError(ValueError):
    """Raised when a configuration violates invariants.

    ``problems`` lists one message per offending field.
    """

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


@dataclass(frozen=True, eq=False)
class SequenceConfig:
    """Timing, detection and bookkeeping of the pulsed measurement.

    Compare instances with :func:`sequence_equal`; the grid field makes the
    generated ``==`` ambiguous.
    """

    detuning_grid: np.ndarray = field(
        default_factory=lambda: mhz_to_angular(np.linspace(-10.0, 10.0, 41)))
    n_reps: int = 1000
    t_probe: float = 2e-6
    t_hold: float = 8e-6
    mode: str = MODE_SINGLE
    probe_power: float = 100e-12
    probe_rabi: float = mhz_to_angular(0.3)
    detection_efficiency: float = 0.1
    rng_seed: int = 0
    noise: bool = True
    n_workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "detuning_grid",
                           np.asarray(self.detuning_grid, dtype=float))
        problems = self.check()
        if problems:
            raise ValidationError(problems)

    def check(self) -> list[str]:
        p = []
        g = self.detuning_grid
        if g.ndim != 1 or g.size == 0:
            p.append("detuning_grid: must be a non-empty 1-d array")
        elif not np.all(np.isfinite(g)):
            p.append("detuning_grid: entries must be finite")
        elif g.size > 1 and np.any(np.diff(g) <= 0):
            p.append("detuning_grid: must be strictly increasing")
        if self.n_reps < 1:
            p.append("n_reps: must be >= 1")
        if not (self.t_probe > 0):
            p.append("t_probe: must be > 0")
        if not (self.t_hold > 0):
            p.append("t_hold: must be > 0")
        if self.mode not in (MODE_SINGLE, MODE_TWO):
            p.append(f"mode: must be '{MODE_SINGLE}' or '{MODE_TWO}'")
        if not (self.probe_power > 0):
            p.append("probe_power: must be > 0")
        if self.probe_rabi < 0:
            p.append("probe_rabi: must be >= 0")
        if not (0 < self.detection_efficiency <= 1):
            p.append("detection_efficiency: must be in (0, 1]")
        if self.n_workers < 1:
            p.append("n_workers: must be >= 1")
        return p

    @property
    def n_slots(self) -> int:
        return 2 if self.mode == MODE_TWO else 1

    @property
    def slots(self) -> tuple[str, ...]:
        return (SLOT_EIT, SLOT_OD) if self.mode == MODE_TWO else (SLOT_EIT,)

    @property
    def rep_period(self) -> float:
        """Duration of one repetition: all probe pulses plus the hold."""
        return self.n_slots * self.t_probe + self.t_hold


@dataclass(frozen=True)
class LossModel:
    """Phenomenological atom-loss model driving the OD trajectory."""

    od0: float = 19.0
    tau1: float = math.inf
    tau2: float = math.inf
    t_break: float = 3e-3
    loss_center: float | None = None  # None: EIT peak + 2 pi 2.5 MHz
    loss_width: float = mhz_to_angular(1.2)
    loss_amp: float = 0.0
    eit_loss_boost: float = 0.0

    def __post_init__(self) -> None:
        problems = self.check()
        if problems:
            raise ValidationError(problems)

    def check(self) -> list[str]:
        p = []
        if not (self.od0 > 0):
            p.append("od0: must be > 0")
        if not (self.tau1 > 0):
            p.append("tau1: must be > 0")
        if not (self.tau2 > 0):
            p.append("tau2: must be > 0")
        if not (self.t_break > 0):
            p.append("t_break: must be > 0")
        if not (self.loss_width > 0):
            p.append("loss_width: must be > 0")
        if not (0 <= self.loss_amp < 1):
            p.append("loss_amp: must be in [0, 1)")
        if self.eit_loss_boost < 0:
            p.append("eit_loss_boost: must be >= 0")
        elif not (self.loss_amp * (1.0 + self.eit_loss_boost) < 1):
            p.append("loss_amp: boosted amplitude loss_amp*(1+eit_loss_boost) must be < 1")
        if self.loss_center is not None and not np.isfinite(self.loss_center):
            p.append("loss_center: must be finite")
        return p

    def amplitude(self, t) -> np.ndarray:
        """Smooth two-regime decay factor A(t), continuous at t_break."""
        t = np.asarray(t, dtype=float)
        early = np.exp(-t / self.tau1)
        late = math.exp(-self.t_break / self.tau1) * np.exp(-(t - self.t_break) / self.tau2)
        return np.where(t <= self.t_break, early, late)

    def resolved_center(self, p: EitParams) -> float:
        if self.loss_center is not None:
            return self.loss_center
        return p.eit_peak + mhz_to_angular(2.5)

    def survival(self, delta, p: EitParams, control_on: bool) -> np.ndarray:
        """Per-repetition survival multiplier at probe detuning ``delta``."""
        boost = (1.0 + self.eit_loss_boost) if control_on else 1.0
        return 1.0 - self.loss_amp * boost * lorentzian_profile(
            np.asarray(delta, dtype=float) - self.resolved_center(p), self.loss_width)

    def effective_rate(self, delta, p: EitParams, control_on: bool,
                       rep_period: float) -> np.ndarray:
        """Decay rate (1/s) added to 1/tau by the selective loss at ``delta``."""
        return -np.log(self.survival(delta, p, control_on)) / rep_period


@dataclass
class TraceSet:
    """Simulated transmission indexed by (detuning, repetition, slot).

    od_true holds the smooth ground-truth OD trajectory od0 * A(t_n);
    od_run additionally folds in the accumulated detuning-selective loss and
    is the OD each individual run actually experienced.
    """

    detunings: np.ndarray         # (n_det,) rad/s
    transmission: np.ndarray      # (n_det, n_reps, n_slots)
    od_true: np.ndarray           # (n_reps,)
    od_run: np.ndarray            # (n_det, n_reps)
    slots: tuple[str, ...]
    params: EitParams
    sequence: SequenceConfig
    loss: LossModel

    @property
    def n_reps(self) -> int:
        return self.transmission.shape[1]

    @property
    def rep_times(self) -> np.ndarray:
        """Start time of each repetition (s), repetition 1 at t = 0."""
        return np.arange(self.n_reps) * self.sequence.rep_period

    def slot_index(self, slot: str) -> int:
        try:
            return self.slots.index(slot)
        except ValueError:
            raise ValidationError([f"slot: '{slot}' not present (have {self.slots})"])



def sequence_equal(a: SequenceConfig, b: SequenceConfig) -> bool:
    """Field-wise equality; dataclass ``==`` is unusable with array fields."""
    if not np.array_equal(a.detuning_grid, b.detuning_grid):
        return False
    skip = {"detuning_grid"}
    return all(getattr(a, f) == getattr(b, f)
               for f in a.__dataclass_fields__ if f not in skip)


def photon_budget(s: SequenceConfig) -> float:
    """Detected photons per probe pulse at full transmission."""
    photon_energy = h * c / PROBE_WAVELENGTH
    return s.probe_power * s.t_probe / photon_energy * s.detection_efficiency


def detect(true_transmission, s: SequenceConfig, rng: np.random.Generator):
    """Apply photon shot noise to a transmission value or array.

    Returns Poisson(N*T)/N with N the per-pulse photon budget; the estimate
    is unbiased with variance T/N.  With ``s.noise`` false the input is
    returned unchanged.
    """
    t = np.asarray(true_transmission, dtype=float)
    if np.any(t < 0):
        raise ValueError("transmission must be >= 0")
    if not s.noise:
        return true_transmission
    n = photon_budget(s)
    out = rng.poisson(n * t) / n
    return float(out) if out.ndim == 0 else out


def weak_probe_check(p: EitParams, s: SequenceConfig) -> bool:
    """True iff the probe is weak enough for the steady-state model
    (Omega_p < gamma / 5, strict)."""
    return s.probe_rabi < p.gamma / 5.0


def ground_truth_od(p: EitParams, s: SequenceConfig, l: LossModel):
    """Return (od_true, od_run): the smooth OD trajectory and the per-run
    OD including accumulated detuning-selective loss."""
    reps = np.arange(s.n_reps)
    od_true = l.od0 * l.amplitude(reps * s.rep_period)
    control_on = p.omega_c > 0
    surv = l.survival(s.detuning_grid, p, control_on)          # (n_det,)
    od_run = od_true[None, :] * surv[:, None] ** reps[None, :]
    return od_true, od_run


def _run_one(i: int, p: EitParams, s: SequenceConfig, od_run_i: np.ndarray) -> np.ndarray:
    """Simulate one fixed-detuning run; owns its own RNG stream so parallel
    and serial execution agree bit-exactly."""
    delta = s.detuning_grid[i]
    imchi = np.empty(s.n_slots)
    imchi[0] = np.imag(susceptibility(delta, p))
    if s.n_slots == 2:
        imchi[1] = lorentzian_profile(delta - p.offset, p.gamma)
    true_t = np.exp(-od_run_i[:, None] * imchi[None, :])       # (n_reps, n_slots)
    rng = np.random.default_rng([s.rng_seed, i])
    return np.asarray(detect(true_t, s, rng))


def simulate(p: EitParams, s: SequenceConfig, l: LossModel) -> TraceSet:
    """Generate per-repetition transmission traces for the full sequence."""
    problems = s.check() + l.check()
    if problems:
        raise ValidationError(problems)

    od_true, od_run = ground_truth_od(p, s, l)
    n_det = s.detuning_grid.size

    if s.n_workers > 1:
        with ThreadPoolExecutor(max_workers=s.n_workers) as pool:
            rows = list(pool.map(lambda i: _run_one(i, p, s, od_run[i]), range(n_det)))
    else:
        rows = [_run_one(i, p, s, od_run[i]) for i in range(n_det)]

    transmission = np.stack(rows, axis=0)
    return TraceSet(
        detunings=s.detuning_grid.copy(),
        transmission=transmission,
        od_true=od_true,
        od_run=od_run,
        slots=s.slots,
        params=p,
        sequence=s,
        loss=l,
    )
