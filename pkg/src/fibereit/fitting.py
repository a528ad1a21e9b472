"""Nonlinear least-squares estimation of spectral and decay parameters.

The solver is a small damped Gauss-Newton (Levenberg-Marquardt) iteration:
five smooth parameters do not justify a heavyweight dependency, and keeping
the loop in-repo exposes the accepted-step RSS trace that the monotonicity
contract is tested against.  Uncertainties come from the standard linearized
covariance, scaled by RSS/(n-p).

Weighting is inverse-variance when the spectrum carries per-point sigmas,
uniform otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .spectral import RydbergConstants, lorentzian_profile
from .units import angular_to_mhz, mhz_to_angular

_CONSTANTS = RydbergConstants()

#: Finite-difference step factor for central differences (cbrt of eps).
_FD_REL = float(np.cbrt(np.finfo(float).eps))


@dataclass
class Spectrum:
    """A transmission spectrum: (detuning, transmission[, sigma]) points."""

    detuning: np.ndarray          # rad/s
    transmission: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.detuning = np.asarray(self.detuning, dtype=float)
        self.transmission = np.asarray(self.transmission, dtype=float)
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)

    def validate(self, n_free: int) -> None:
        d, t = self.detuning, self.transmission
        problems = []
        if d.ndim != 1 or d.shape != t.shape:
            problems.append("detuning and transmission must be matching 1-d arrays")
        elif d.size < n_free + 1:
            problems.append(f"need at least {n_free + 1} points for {n_free} free parameters")
        elif np.unique(d).size != d.size:
            problems.append("detunings must be distinct")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            problems.append("transmission must be finite and >= 0")
        if self.sigma is not None and (self.sigma.shape != t.shape or np.any(self.sigma < 0)):
            problems.append("sigma must match transmission and be >= 0")
        if problems:
            raise ValueError("invalid spectrum: " + "; ".join(problems))

    def weights(self) -> np.ndarray:
        """Inverse-sigma weights; zero sigmas are floored so a single
        noiseless point cannot dominate the objective."""
        if self.sigma is None:
            return np.ones_like(self.transmission)
        positive = self.sigma[self.sigma > 0]
        floor = 0.1 * float(np.median(positive)) if positive.size else 1.0
        return 1.0 / np.maximum(self.sigma, max(floor, 1e-300))


@dataclass
class FitResult:
    """Estimated parameters with convergence diagnostics.

    ``params`` and ``stderr`` are keyed by parameter name; frozen parameters
    appear in ``params`` without a stderr entry.  ``stderr`` is None when the
    fit did not converge or the information matrix was singular.
    """

    model: str
    params: dict[str, float]
    stderr: dict[str, float] | None
    rss: float
    converged: bool
    n_iter: int
    n_points: int
    flags: tuple[str, ...] = ()
    derived: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        freq_keys = {"gamma", "omega_c", "delta_c", "gamma_ryd", "offset",
                     "gamma_ryd_excess", "eit_peak"}

        def conv(d):
            return {(k + "_mhz" if k in freq_keys else k):
                    (angular_to_mhz(v) if k in freq_keys else v)
                    for k, v in d.items()}

        return {
            "model": self.model,
            "params": conv(self.params),
            "stderr": conv(self.stderr) if self.stderr is not None else None,
            "rss": self.rss,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "n_points": self.n_points,
            "flags": list(self.flags),
            "derived": conv(self.derived),
        }


# ---------------------------------------------------------------------------
# Levenberg-Marquardt core
# ---------------------------------------------------------------------------

@dataclass
class LMResult:
    x: np.ndarray
    rss: float
    n_iter: int
    converged: bool
    cov: np.ndarray | None
    rss_trace: list[float]


def fd_jacobian(residual, x: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of the residual vector."""
    cols = []
    for j in range(x.size):
        h = _FD_REL * max(abs(x[j]), scale[j])
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        cols.append((residual(xp) - residual(xm)) / (2.0 * h))
    return np.column_stack(cols)


def lm_fit(residual, x0, *, jac=None, scale=None, max_iter: int = 200,
           ftol: float = 1e-12, xtol: float = 1e-12) -> LMResult:
    """Minimize sum(residual(x)**2) by damped Gauss-Newton steps.

    The damping multiplies diag(J^T J) (Marquardt scaling), which keeps the
    step well-conditioned under wildly different parameter magnitudes.  Only
    steps that do not increase the RSS are accepted, so the returned
    ``rss_trace`` of accepted iterates is non-increasing by construction.
    """
    x = np.asarray(x0, dtype=float).copy()
    scale = np.ones_like(x) if scale is None else np.asarray(scale, dtype=float)
    r = np.asarray(residual(x), dtype=float)
    rss = float(r @ r)
    trace = [rss]
    lam = 1e-3
    converged = False
    n_iter = 0
    jac_fn = jac if jac is not None else (lambda xv: fd_jacobian(residual, xv, scale))

    for n_iter in range(1, max_iter + 1):
        J = np.asarray(jac_fn(x), dtype=float)
        g = J.T @ r
        H = J.T @ J
        d = np.diag(H).copy()
        d_floor = max(d.max(), 1e-300) * 1e-12
        d = np.maximum(d, d_floor)

        accepted = False
        step = None
        for _ in range(50):
            try:
                step = np.linalg.solve(H + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(step)):
                lam *= 10.0
                continue
            r_new = np.asarray(residual(x + step), dtype=float)
            rss_new = float(r_new @ r_new)
            if math.isfinite(rss_new) and rss_new <= rss:
                accepted = True
                break
            lam *= 10.0

        if not accepted:
            # Even heavily damped (tiny) steps do not improve: we are at a
            # numerical minimum.  Count it as converged if progress was made.
            converged = len(trace) > 1 or rss == 0.0
            break

        improvement = rss - rss_new
        x = x + step
        r, rss = r_new, rss_new
        trace.append(rss)
        lam = max(lam * 0.25, 1e-14)
        if improvement <= ftol * max(rss, 1e-300) or np.all(
                np.abs(step) <= xtol * (np.abs(x) + scale)):
            converged = True
            break

    cov = None
    n = r.size
    p = x.size
    if converged and n > p:
        J = np.asarray(jac_fn(x), dtype=float)
        H = J.T @ J
        if np.all(np.isfinite(H)) and np.linalg.cond(H) < 1.0 / np.finfo(float).eps:
            cov = np.linalg.inv(H) * (rss / (n - p))
    return LMResult(x=x, rss=rss, n_iter=n_iter, converged=converged,
                    cov=cov, rss_trace=trace)


# ---------------------------------------------------------------------------
# Spectral models
# ---------------------------------------------------------------------------

def od_model(delta, od: float, gamma: float, offset: float):
    """Lorentzian absorption transmission used by fit_od."""
    return np.exp(-od * lorentzian_profile(np.asarray(delta, float) - offset, gamma))


def _eit_fold(omega_c: float, gamma_ryd: float, gamma: float):
    """Fold solver excursions into the valid domain: the model is even in
    omega_c, and gamma_ryd is mirrored and floored away from zero."""
    return abs(omega_c), max(abs(gamma_ryd), 1e-9 * gamma)


def eit_model(delta, od: float, omega_c: float, delta_c: float,
              gamma_ryd: float, offset: float, gamma: float):
    """Ladder-EIT transmission, tolerant of out-of-domain solver trials."""
    oc, gr = _eit_fold(omega_c, gamma_ryd, gamma)
    d = np.asarray(delta, dtype=float) - offset
    ryd = gr - 2j * (delta_c + d)
    imchi = np.imag(1j * gamma / (gamma - 2j * d + (oc ** 2) / ryd))
    return np.exp(-od * imchi)


def eit_jacobian(delta, od: float, omega_c: float, delta_c: float,
                 gamma_ryd: float, offset: float, gamma: float) -> np.ndarray:
    """Analytic Jacobian of eit_model w.r.t. (od, omega_c, delta_c,
    gamma_ryd, offset), columns in that order."""
    oc, gr = _eit_fold(omega_c, gamma_ryd, gamma)
    d = np.asarray(delta, dtype=float) - offset
    ryd = gr - 2j * (delta_c + d)
    B = gamma - 2j * d + (oc ** 2) / ryd
    imchi = np.imag(1j * gamma / B)
    T = np.exp(-od * imchi)

    inv_b2 = 1.0 / (B * B)
    oc2_d2 = (oc ** 2) / (ryd * ryd)

    def dimchi(db):
        return np.imag(-1j * gamma * inv_b2 * db)

    sgn_oc = 1.0 if omega_c >= 0 else -1.0
    sgn_gr = 1.0 if gamma_ryd >= 0 else -1.0
    cols = [
        -imchi * T,                                        # d/d od
        -od * T * dimchi(sgn_oc * 2.0 * oc / ryd),         # d/d omega_c
        -od * T * dimchi(2j * oc2_d2),                     # d/d delta_c
        -od * T * dimchi(-sgn_gr * oc2_d2),                # d/d gamma_ryd
        -od * T * dimchi(2j - 2j * oc2_d2),                # d/d offset
    ]
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# Spectrum fits
# ---------------------------------------------------------------------------

_RATE_SCALE = mhz_to_angular(1.0)


def _self_init_od(spec: Spectrum, gamma: float) -> dict[str, float]:
    t = spec.transmission
    offset = float(spec.detuning[int(np.argmin(t))])
    od = max(-math.log(max(float(t.min()), 1e-12)), 0.0)
    return {"od": od, "gamma": gamma, "offset": offset}


def fit_od(spec: Spectrum, init: dict[str, float] | None = None, *,
           fit_gamma: bool = False, gamma: float | None = None) -> FitResult:
    """Fit the Lorentzian absorption model, estimating {od, offset} and
    optionally gamma (frozen to the configured probe linewidth by default).

    Self-initializes from the spectrum when ``init`` is absent.
    """
    gamma0 = gamma if gamma is not None else _CONSTANTS.gamma_d2
    n_free = 3 if fit_gamma else 2
    spec.validate(n_free)

    start = _self_init_od(spec, gamma0)
    if init:
        start.update(init)

    w = spec.weights()
    y = spec.transmission
    delta = spec.detuning

    if fit_gamma:
        names = ["od", "gamma", "offset"]
        scale = np.array([1.0, _RATE_SCALE, _RATE_SCALE])

        def residual(x):
            return (od_model(delta, x[0], max(abs(x[1]), 1e-9 * gamma0), x[2]) - y) * w
    else:
        names = ["od", "offset"]
        scale = np.array([1.0, _RATE_SCALE])

        def residual(x):
            return (od_model(delta, x[0], gamma0, x[1]) - y) * w

    x0 = np.array([start[n] for n in names])
    res = lm_fit(residual, x0, scale=scale)

    params = {"od": float(res.x[0]), "gamma": gamma0,
              "offset": float(res.x[-1])}
    if fit_gamma:
        params["gamma"] = abs(float(res.x[1]))

    flags = []
    if params["od"] < 1e-3:
        flags.append("degenerate")
    stderr = None
    if res.converged and res.cov is not None:
        errs = np.sqrt(np.maximum(np.diag(res.cov), 0.0))
        stderr = dict(zip(names, map(float, errs)))
    elif res.converged:
        flags.append("stderr_unavailable")
        warnings.warn("singular information matrix: uncertainties omitted", stacklevel=2)

    return FitResult(model="od", params=params, stderr=stderr, rss=res.rss,
                     converged=res.converged, n_iter=res.n_iter,
                     n_points=y.size, flags=tuple(flags))


def _eit_window_excess(spec: Spectrum, base: FitResult, gamma: float):
    """Maximum positive deviation from the fitted Lorentzian inside the
    two-linewidth core, and the noise floor it must exceed."""
    pred = od_model(spec.detuning, base.params["od"], base.params["gamma"],
                    base.params["offset"])
    resid = spec.transmission - pred
    core = np.abs(spec.detuning - base.params["offset"]) < 2.0 * gamma
    excess = float(resid[core].max()) if np.any(core) else 0.0
    if spec.sigma is not None and np.any(spec.sigma > 0):
        floor = 3.0 * float(np.median(spec.sigma[spec.sigma > 0]))
    else:
        outside = resid[~core]
        floor = 5.0 * float(np.sqrt(np.mean(outside ** 2))) if outside.size else 0.0
    return excess, max(floor, 1e-9), core


def fit_eit(spec: Spectrum, init: dict[str, float] | None = None, *,
            gamma: float | None = None,
            constants: RydbergConstants | None = None) -> FitResult:
    """Fit the ladder-EIT model, estimating {od, omega_c, delta_c,
    gamma_ryd, offset} with gamma frozen.

    If no transparency window rises above the noise floor the fit falls back
    to the Lorentzian model and the result is flagged "no_eit_window".  The
    excess dephasing gamma_ryd - gamma_29s is reported under ``derived``.
    """
    constants = constants or _CONSTANTS
    gamma0 = gamma if gamma is not None else constants.gamma_d2
    spec.validate(5)

    base = fit_od(spec, gamma=gamma0)
    excess, floor, core = _eit_window_excess(spec, base, gamma0)
    if excess <= floor:
        params = dict(base.params)
        params["omega_c"] = 0.0
        return FitResult(model="eit", params=params, stderr=base.stderr,
                         rss=base.rss, converged=base.converged,
                         n_iter=base.n_iter, n_points=spec.transmission.size,
                         flags=base.flags + ("no_eit_window",))

    # Initial guesses: peak position inside the core fixes delta_c, the
    # window depth fixes omega_c once a provisional gamma_ryd is assumed.
    y = spec.transmission
    delta = spec.detuning
    offset0 = base.params["offset"]
    od0 = max(base.params["od"], 0.1)
    idx_core = np.flatnonzero(core)
    peak_pos = float(delta[idx_core[np.argmax(y[idx_core])]])
    delta_c0 = offset0 - peak_pos
    gamma_ryd0 = mhz_to_angular(2.0)
    t_peak = float(np.clip(y[idx_core].max(), 1e-12, 1.0 - 1e-12))
    imchi_peak = float(np.clip(-math.log(t_peak) / od0, 1e-6, 1.0 - 1e-6))
    omega_c0 = math.sqrt(gamma_ryd0 * gamma0 * (1.0 / imchi_peak - 1.0))
    omega_c0 = float(np.clip(omega_c0, mhz_to_angular(0.5), mhz_to_angular(50.0)))

    start = {"od": od0, "omega_c": omega_c0, "delta_c": delta_c0,
             "gamma_ryd": gamma_ryd0, "offset": offset0}
    if init:
        start.update(init)

    names = ["od", "omega_c", "delta_c", "gamma_ryd", "offset"]
    w = spec.weights()
    scale = np.array([1.0, _RATE_SCALE, _RATE_SCALE, _RATE_SCALE, _RATE_SCALE])

    def residual(x):
        return (eit_model(delta, *x, gamma0) - y) * w

    def jacobian(x):
        return eit_jacobian(delta, *x, gamma0) * w[:, None]

    x0 = np.array([start[n] for n in names])
    res = lm_fit(residual, x0, jac=jacobian, scale=scale)

    params = {
        "od": float(res.x[0]),
        "omega_c": abs(float(res.x[1])),
        "delta_c": float(res.x[2]),
        "gamma_ryd": abs(float(res.x[3])),
        "offset": float(res.x[4]),
        "gamma": gamma0,
    }
    flags = []
    stderr = None
    if res.converged and res.cov is not None:
        errs = np.sqrt(np.maximum(np.diag(res.cov), 0.0))
        stderr = dict(zip(names, map(float, errs)))
    elif res.converged:
        flags.append("stderr_unavailable")
        warnings.warn("singular information matrix: uncertainties omitted", stacklevel=2)

    derived = {
        "gamma_ryd_excess": params["gamma_ryd"] - constants.gamma_29s,
        "eit_peak": params["offset"] - params["delta_c"],
    }
    return FitResult(model="eit", params=params, stderr=stderr, rss=res.rss,
                     converged=res.converged, n_iter=res.n_iter,
                     n_points=y.size, flags=tuple(flags), derived=derived)


# ---------------------------------------------------------------------------
# Two-segment exponential decay
# ---------------------------------------------------------------------------

@dataclass
class SegmentFit:
    """One exponential segment: y ~ exp(-rate * t)."""

    rate: float
    rate_err: float
    n_points: int

    @property
    def tau(self) -> float:
        return 1.0 / self.rate if self.rate > 0 else math.inf

    @property
    def tau_err(self) -> float:
        return self.rate_err / self.rate ** 2 if self.rate > 0 else math.inf


@dataclass
class DecayFit:
    """Two-segment exponential decay fit of a positive series."""

    breakpoint: float | None
    segment1: SegmentFit | None
    segment2: SegmentFit | None
    rss: float
    searched: bool
    uninformative: bool
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def seg(s):
            if s is None:
                return None
            return {"rate_per_s": s.rate, "rate_err_per_s": s.rate_err,
                    "tau_s": s.tau, "tau_err_s": s.tau_err, "n_points": s.n_points}

        return {"breakpoint_s": self.breakpoint, "segment1": seg(self.segment1),
                "segment2": seg(self.segment2), "rss": self.rss,
                "searched": self.searched, "uninformative": self.uninformative,
                "flags": list(self.flags)}


def _weighted_linfit(t: np.ndarray, z: np.ndarray, w: np.ndarray):
    """Weighted straight-line fit z ~ a + b t; returns (a, b, rss, b_err)."""
    sw = w * w
    s0 = sw.sum()
    tbar = (sw * t).sum() / s0
    zbar = (sw * z).sum() / s0
    tc = t - tbar
    stt = (sw * tc * tc).sum()
    b = (sw * tc * (z - zbar)).sum() / stt
    a = zbar - b * tbar
    r = (a + b * t - z) * w
    rss = float(r @ r)
    dof = t.size - 2
    b_err = math.sqrt(rss / dof / stt) if dof > 0 and stt > 0 else math.inf
    return a, b, rss, b_err


def _segment_rss_scan(t: np.ndarray, z: np.ndarray):
    """RSS of an unweighted line fit over every prefix [0..k] and suffix
    [k+1..n-1], via cumulative sufficient statistics (O(n) total)."""
    tc = t - t.mean()
    zc = z - z.mean()

    def prefix(tt, zz):
        one = np.arange(1, tt.size + 1, dtype=float)
        st = np.cumsum(tt)
        sz = np.cumsum(zz)
        stt = np.cumsum(tt * tt)
        stz = np.cumsum(tt * zz)
        szz = np.cumsum(zz * zz)
        det = one * stt - st * st
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (one * stz - st * sz) / det
            intercept = (sz - slope * st) / one
            rss = szz - intercept * sz - slope * stz
        return np.maximum(rss, 0.0)

    rss_pre = prefix(tc, zc)
    rss_suf = prefix(tc[::-1], zc[::-1])[::-1]
    return rss_pre, rss_suf


def fit_two_segment_decay(t, y, breakpoint: float | None = None, *,
                          sigma=None, min_points: int = 4) -> DecayFit:
    """Fit ln(y) with two straight lines split at ``breakpoint``.

    With no breakpoint given it is chosen by grid search over the sample
    times, minimizing the total unweighted RSS (earliest minimizer on ties).
    Segments shorter than ``min_points`` have their rate omitted with a
    warning flag.  The fit is ``uninformative`` when both rates agree within
    twice their combined standard error, i.e. the data carry no evidence of
    a second regime.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be matching 1-d arrays")
    if np.any(y <= 0):
        raise ValueError("y must be > 0 (fit is linear in ln y)")
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]
    w = np.ones_like(y)
    if sigma is not None:
        sig = np.asarray(sigma, dtype=float)[order]
        w = 1.0 / np.maximum(sig, 1e-300)
    z = np.log(y)
    n = t.size
    flags = []

    searched = breakpoint is None
    if searched:
        if n < 2 * min_points:
            raise ValueError(f"need >= {2 * min_points} points to search for a breakpoint")
        rss_pre, rss_suf = _segment_rss_scan(t, z)
        ks = np.arange(min_points - 1, n - min_points)
        total = rss_pre[ks] + rss_suf[ks + 1]
        k_best = int(ks[int(np.argmin(total))])
        breakpoint = float(t[k_best])

    mask1 = t <= breakpoint
    mask2 = ~mask1

    def fit_segment(mask, label):
        if mask.sum() < min_points:
            flags.append(f"{label}_too_short")
            warnings.warn(f"{label} has fewer than {min_points} points: rate omitted",
                          stacklevel=3)
            return None, 0.0
        a, b, rss, b_err = _weighted_linfit(t[mask], z[mask], w[mask])
        return SegmentFit(rate=-b, rate_err=b_err, n_points=int(mask.sum())), rss

    seg1, rss1 = fit_segment(mask1, "segment1")
    seg2, rss2 = fit_segment(mask2, "segment2")

    uninformative = False
    if seg1 is not None and seg2 is not None:
        diff = abs(seg1.rate - seg2.rate)
        tol = max(2.0 * math.hypot(seg1.rate_err, seg2.rate_err),
                  1e-6 * max(abs(seg1.rate), abs(seg2.rate), 1e-300))
        uninformative = diff <= tol

    return DecayFit(breakpoint=breakpoint, segment1=seg1, segment2=seg2,
                    rss=rss1 + rss2, searched=searched,
                    uninformative=uninformative, flags=tuple(flags))
