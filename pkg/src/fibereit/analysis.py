"""Time-resolved analysis of simulated trace sets.

Provides the smoothing and averaging transforms behind the repetition-
resolved maps, the EIT-minus-OD difference map, loss-peak localization and
the two-regime decay analysis of a fixed-detuning cut.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .fitting import DecayFit, Spectrum, fit_two_segment_decay
from .sequence import SLOT_EIT, SLOT_OD, TraceSet, ValidationError, photon_budget


def _window_bounds(n: int, window: int):
    """Truncated centered windows: index i averages [i-(w-1)//2, i+w//2],
    clipped to the array; for even windows some index's window is exactly a
    20-repetition block, matching the block-average protocol."""
    idx = np.arange(n)
    lo = np.maximum(idx - (window - 1) // 2, 0)
    hi = np.minimum(idx + window // 2, n - 1)
    return lo, hi


def _rolling_mean(a: np.ndarray, window: int, axis: int = 1) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    lo, hi = _window_bounds(n, window)
    csum = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
    out = (csum[hi + 1] - csum[lo]) / (hi + 1 - lo).reshape((-1,) + (1,) * (a.ndim - 1))
    return np.moveaxis(out, 0, axis)


def _rolling_mean_std(a: np.ndarray, window: int):
    """Rolling mean, sample std (ddof=1) and window size along axis 0."""
    n = a.shape[0]
    lo, hi = _window_bounds(n, window)
    counts = (hi + 1 - lo).astype(float)
    shape = (-1,) + (1,) * (a.ndim - 1)
    csum = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
    csq = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a * a, axis=0)])
    cnt = counts.reshape(shape)
    mean = (csum[hi + 1] - csum[lo]) / cnt
    ss = (csq[hi + 1] - csq[lo]) - cnt * mean * mean
    with np.errstate(invalid="ignore", divide="ignore"):
        std = np.sqrt(np.maximum(ss, 0.0) / np.maximum(cnt - 1.0, 1.0))
    return mean, std, counts


def moving_average(ts: TraceSet, window: int = 20) -> TraceSet:
    """Centered moving mean over repetitions, per detuning and slot.

    Edge windows shrink; the output has the same shape as the input.
    """
    if window < 1:
        raise ValidationError(["window: must be >= 1"])
    if window > ts.n_reps:
        raise ValidationError([f"window: {window} exceeds n_reps={ts.n_reps}"])
    smoothed = _rolling_mean(ts.transmission, window, axis=1)
    return TraceSet(detunings=ts.detunings, transmission=smoothed,
                    od_true=ts.od_true, od_run=ts.od_run, slots=ts.slots,
                    params=ts.params, sequence=ts.sequence, loss=ts.loss)


def block_average(ts: TraceSet, start_rep: int, count: int = 20) -> dict[str, Spectrum]:
    """Mean and std-of-mean per detuning over repetitions
    [start_rep, start_rep + count), 1-based; one Spectrum per slot."""
    if count < 1:
        raise ValidationError(["count: must be >= 1"])
    if start_rep < 1 or start_rep + count - 1 > ts.n_reps:
        raise ValidationError(
            [f"start_rep: block [{start_rep}, {start_rep + count - 1}] outside 1..{ts.n_reps}"])
    block = ts.transmission[:, start_rep - 1:start_rep - 1 + count, :]
    mean = block.mean(axis=1)
    if count > 1:
        sem = block.std(axis=1, ddof=1) / math.sqrt(count)
    else:
        sem = None
    out = {}
    for j, slot in enumerate(ts.slots):
        out[slot] = Spectrum(detuning=ts.detunings.copy(), transmission=mean[:, j],
                             sigma=None if sem is None else sem[:, j])
    return out


@dataclass
class DiffMap:
    """Smoothed EIT-minus-OD transmission over (detuning, repetition)."""

    detunings: np.ndarray     # (n_det,)
    rep_times: np.ndarray     # (n_reps,)
    values: np.ndarray        # (n_det, n_reps)


def diff_map(ts: TraceSet, window: int = 20) -> DiffMap:
    """Difference of the smoothed EIT and OD slots of a two-pulse trace set."""
    if SLOT_OD not in ts.slots:
        raise ValidationError(["mode: diff_map requires a two-pulse TraceSet"])
    sm = moving_average(ts, window)
    values = (sm.transmission[:, :, sm.slot_index(SLOT_EIT)]
              - sm.transmission[:, :, sm.slot_index(SLOT_OD)])
    return DiffMap(detunings=ts.detunings.copy(), rep_times=ts.rep_times,
                   values=values)


# ---------------------------------------------------------------------------
# Peak localization
# ---------------------------------------------------------------------------

def _parabolic_peak(x: np.ndarray, y: np.ndarray, idx: int) -> float:
    """Sub-grid peak position from a quadratic through the point and its
    neighbors; falls back to the grid point for degenerate curvature."""
    if idx <= 0 or idx >= x.size - 1:
        return float(x[idx])
    xs = x[idx - 1:idx + 2]
    ys = y[idx - 1:idx + 2]
    a, b, _ = np.polyfit(xs - xs[1], ys, 2)
    if a >= 0 or not np.isfinite(a):
        return float(xs[1])
    vertex = -b / (2.0 * a)
    half = max(xs[2] - xs[1], xs[1] - xs[0])
    return float(xs[1] + np.clip(vertex, -half, half))


def _locate_peak(spec: Spectrum, min_prominence: float | None):
    """Most prominent interior transmission peak, parabolically refined.

    Returns (position, prominence) or (nan, 0.0) when nothing rises above
    the noise floor.
    """
    y = spec.transmission
    if min_prominence is None:
        if spec.sigma is not None and np.any(spec.sigma > 0):
            min_prominence = 4.0 * float(np.median(spec.sigma[spec.sigma > 0]))
        else:
            min_prominence = 1e-9
    peaks, props = find_peaks(y, prominence=min_prominence)
    if peaks.size == 0:
        return math.nan, 0.0
    best = int(peaks[int(np.argmax(props["prominences"]))])
    return _parabolic_peak(spec.detuning, y, best), float(np.max(props["prominences"]))


@dataclass
class PeakShiftResult:
    """Loss-peak position relative to the early EIT peak."""

    shift: float              # rad/s; nan when a peak is missing
    early_peak: float
    late_peak: float
    found: bool
    flags: tuple[str, ...] = ()


def peak_shift(ts: TraceSet, early_block: tuple[int, int] = (1, 20),
               late_block: tuple[int, int] | None = None,
               min_prominence: float | None = None) -> PeakShiftResult:
    """Shift of the late-repetition transmission peak (OD slot if present)
    against the early EIT peak, both refined below the grid spacing."""
    if late_block is None:
        late_block = (max(ts.n_reps - 19, 1), min(20, ts.n_reps))
    early = block_average(ts, *early_block)[SLOT_EIT]
    late_slot = SLOT_OD if SLOT_OD in ts.slots else SLOT_EIT
    late = block_average(ts, *late_block)[late_slot]

    early_pos, early_prom = _locate_peak(early, min_prominence)
    late_pos, late_prom = _locate_peak(late, min_prominence)
    flags = []
    if not math.isfinite(early_pos) or early_prom == 0.0:
        flags.append("no_early_peak")
    if not math.isfinite(late_pos) or late_prom == 0.0:
        flags.append("no_late_peak")
    found = not flags
    shift = late_pos - early_pos if found else math.nan
    return PeakShiftResult(shift=shift, early_peak=early_pos, late_peak=late_pos,
                           found=found, flags=tuple(flags))


# ---------------------------------------------------------------------------
# Regime detection
# ---------------------------------------------------------------------------

@dataclass
class RegimeReport:
    """Two-regime analysis of a fixed-detuning cut of a two-pulse trace set."""

    cut_detuning: float                  # rad/s, actual grid value used
    breakpoint_rep: int | None
    breakpoint_time: float | None        # s
    eit_decay: DecayFit | None
    od_decay: DecayFit | None
    peak_shift: PeakShiftResult
    equality_rep: int | None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        from .units import angular_to_mhz

        return {
            "cut_detuning_mhz": angular_to_mhz(self.cut_detuning),
            "breakpoint_rep": self.breakpoint_rep,
            "breakpoint_time_s": self.breakpoint_time,
            "eit_decay": self.eit_decay.to_dict() if self.eit_decay else None,
            "od_decay": self.od_decay.to_dict() if self.od_decay else None,
            "peak_shift_mhz": (angular_to_mhz(self.peak_shift.shift)
                               if self.peak_shift.found else None),
            "equality_rep": self.equality_rep,
            "flags": list(self.flags),
        }


def _block_series(ts: TraceSet, det_idx: int, slot: str, window: int,
                  min_block_photons: float):
    """Block-averaged -ln(T) series at one detuning, censoring blocks whose
    photon count is too low for a meaningful logarithm.

    Returns (block_time, y, sigma_y, kept_blocks)."""
    n_blocks = ts.n_reps // window
    j = ts.slot_index(slot)
    t = ts.transmission[det_idx, :n_blocks * window, j].reshape(n_blocks, window)
    tbar = t.mean(axis=1)
    times = ts.rep_times[:n_blocks * window].reshape(n_blocks, window).mean(axis=1)

    if ts.sequence.noise:
        block_photons = photon_budget(ts.sequence) * window
        keep = (tbar * block_photons >= min_block_photons) & (tbar < 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            sigma_y = 1.0 / np.sqrt(np.maximum(tbar, 1e-300) * block_photons)
    else:
        keep = (tbar > 0.0) & (tbar < 1.0)
        sigma_y = np.ones_like(tbar)
    y = -np.log(np.where(keep, tbar, 1.0))
    return times[keep], y[keep], sigma_y[keep], keep


def _common_breakpoint(series: list[tuple[np.ndarray, np.ndarray]],
                       candidates: np.ndarray, min_points: int = 4):
    """Candidate time minimizing the summed two-segment RSS over all series
    (earliest on ties); None when no candidate splits every series validly."""
    best_t, best_rss = None, math.inf
    for cand in candidates:
        total = 0.0
        ok = True
        for t, y in series:
            n1 = int(np.sum(t <= cand))
            if n1 < min_points or t.size - n1 < min_points:
                ok = False
                break
            fit = fit_two_segment_decay(t, y, breakpoint=float(cand))
            total += fit.rss
        if ok and (best_t is None or total < best_rss):
            best_t, best_rss = float(cand), total
    return best_t


def detect_regimes(ts: TraceSet, cut_detuning: float, *, window: int = 20,
                   k_sigma: float = 2.0, m_consecutive: int = 20,
                   breakpoint: float | None = None,
                   min_block_photons: float = 10.0) -> RegimeReport:
    """Extract per-slot decay regimes at a fixed detuning.

    The cut falls back to the nearest grid point (with a warning).  Both
    slots' -ln(T) block series share one breakpoint, found by grid search
    over block times unless ``breakpoint`` is given.  ``equality_rep`` is
    the first repetition from which the smoothed slots stay statistically
    indistinguishable (|diff| below k_sigma pooled standard errors) for
    ``m_consecutive`` repetitions.
    """
    if SLOT_OD not in ts.slots:
        raise ValidationError(["mode: detect_regimes requires a two-pulse TraceSet"])
    flags: list[str] = []

    det_idx = int(np.argmin(np.abs(ts.detunings - cut_detuning)))
    actual = float(ts.detunings[det_idx])
    if not math.isclose(actual, cut_detuning, rel_tol=1e-12, abs_tol=1e-6):
        warnings.warn("cut detuning not on grid: using nearest grid point", stacklevel=2)
        flags.append("cut_snapped_to_grid")

    slot_series = {}
    for slot in (SLOT_EIT, SLOT_OD):
        t, y, sig, _ = _block_series(ts, det_idx, slot, window, min_block_photons)
        slot_series[slot] = (t, y, sig)
        if t.size < 8:
            flags.append(f"{slot}_slot_censored")

    usable = {s: v for s, v in slot_series.items() if v[0].size >= 8}

    searched = breakpoint is None
    bp = breakpoint
    if searched and usable:
        all_times = np.unique(np.concatenate([v[0] for v in usable.values()]))
        bp = _common_breakpoint([(v[0], v[1]) for v in usable.values()], all_times)
        if bp is None:
            flags.append("no_breakpoint_candidates")

    fits: dict[str, DecayFit | None] = {SLOT_EIT: None, SLOT_OD: None}
    for slot, (t, y, sig) in usable.items():
        if bp is not None:
            fits[slot] = fit_two_segment_decay(t, y, breakpoint=bp, sigma=sig)

    breakpoint_rep = None
    breakpoint_time = None
    if bp is not None:
        informative = any(f is not None and not f.uninformative for f in fits.values())
        if not informative and searched:
            flags.append("no_breakpoint")
        else:
            if not informative:
                flags.append("rates_uninformative")
            # Boundary reported at the end of the last segment-1 block.
            n_blocks = ts.n_reps // window
            centers = ts.rep_times[:n_blocks * window].reshape(n_blocks, window).mean(axis=1)
            n_seg1 = max(int(np.sum(centers <= bp)), 1)
            breakpoint_rep = n_seg1 * window
            breakpoint_time = breakpoint_rep * ts.sequence.rep_period

    # Statistical-equality repetition from the smoothed traces.
    j_e = ts.slot_index(SLOT_EIT)
    j_o = ts.slot_index(SLOT_OD)
    tr = ts.transmission[det_idx]                         # (n_reps, n_slots)
    mean, std, counts = _rolling_mean_std(tr, window)
    se = std / np.sqrt(counts)[:, None]
    diff = np.abs(mean[:, j_e] - mean[:, j_o])
    pooled = np.sqrt(se[:, j_e] ** 2 + se[:, j_o] ** 2)
    equal = diff < k_sigma * pooled + 1e-300
    equality_rep = None
    run = 0
    for i, flag in enumerate(equal):
        run = run + 1 if flag else 0
        if run >= m_consecutive:
            equality_rep = i - m_consecutive + 2   # 1-based first rep of the run
            break

    shift = peak_shift(ts, early_block=(1, min(window, ts.n_reps)))

    return RegimeReport(cut_detuning=actual, breakpoint_rep=breakpoint_rep,
                        breakpoint_time=breakpoint_time,
                        eit_decay=fits[SLOT_EIT], od_decay=fits[SLOT_OD],
                        peak_shift=shift, equality_rep=equality_rep,
                        flags=tuple(flags))
