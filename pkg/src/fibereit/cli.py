"""Command-line interface.

Exit codes: 0 success, 1 validation failure (machine-readable error list on
stderr), 2 fit non-convergence, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import conveyor, stark
from .analysis import block_average, detect_regimes, diff_map, moving_average
from .config import load_run_config
from .fitting import fit_eit, fit_od, fit_two_segment_decay
from .presets import PRESET_NAMES, preset
from .reproduce import FIGURES, presets_for_figure, run_figure
from .sequence import MODE_SINGLE, MODE_TWO, ValidationError, simulate
from .traceio import atomic_write_text, read_traceset, write_traceset
from .units import angular_to_mhz, mhz_to_angular

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NO_CONVERGENCE = 2
EXIT_IO = 3


def _emit(data: dict, out: str | None) -> None:
    text = json.dumps(data, indent=2) + "\n"
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> "RunConfig":
    from .config import RunConfig  # noqa: F401 (typing aid)

    if args.config:
        rc = load_run_config(args.config)
    else:
        rc = preset(args.preset, mode=args.mode,
                    n_reps=args.n_reps if args.n_reps else 1000,
                    n_workers=args.workers)
    seq = rc.sequence
    updates = {}
    if args.seed is not None:
        updates["rng_seed"] = args.seed
    if args.no_noise:
        updates["noise"] = False
    if args.n_reps and seq.n_reps != args.n_reps:
        updates["n_reps"] = args.n_reps
    if args.workers and seq.n_workers != args.workers:
        updates["n_workers"] = args.workers
    if updates:
        rc = replace(rc, sequence=replace(seq, **updates))
    if args.no_loss:
        from .sequence import LossModel

        rc = replace(rc, loss=LossModel(od0=rc.loss.od0))
    return rc


def cmd_simulate(args) -> int:
    rc = _load_config(args)
    ts = simulate(rc.eit, rc.sequence, rc.loss)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, sidecar = write_traceset(ts, out_dir / "traces.csv")
    print(f"wrote {csv_path} and {sidecar}")
    return EXIT_OK


def _read_traces(path: str):
    p = Path(path)
    if not p.exists():
        raise ValidationError([f"data: no such file {path}"])
    return read_traceset(p)


def cmd_fit(args) -> int:
    ts = _read_traces(args.data)
    spec = block_average(ts, args.start_rep, args.count)[args.slot]
    if args.kind == "od":
        result = fit_od(spec, fit_gamma=args.fit_gamma)
    else:
        result = fit_eit(spec)
    _emit(result.to_dict(), args.out)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_fit_decay(args) -> int:
    from .analysis import _block_series

    ts = _read_traces(args.data)
    cut = mhz_to_angular(args.cut_mhz) if args.cut_mhz is not None else ts.params.eit_peak
    idx = int(np.argmin(np.abs(ts.detunings - cut)))
    bp = args.brk * 1e-3 if args.brk is not None else None
    out = {"cut_detuning_mhz": angular_to_mhz(float(ts.detunings[idx]))}
    converged = True
    for slot in ts.slots:
        t, y, sig, _ = _block_series(ts, idx, slot, args.window, 10.0)
        if t.size < 8:
            out[slot] = None
            continue
        fit = fit_two_segment_decay(t, y, breakpoint=bp, sigma=sig)
        out[slot] = fit.to_dict()
        converged = converged and (fit.segment1 is not None and fit.segment2 is not None)
    _emit(out, args.out)
    return EXIT_OK if converged else EXIT_NO_CONVERGENCE


def cmd_diffmap(args) -> int:
    from .reproduce import _write_map_csv

    ts = _read_traces(args.data)
    dm = diff_map(ts, args.window)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_map_csv(out_dir / "diffmap.csv", dm.detunings, dm.values)
    if args.gnuplot:
        lines = []
        for i, d in enumerate(dm.detunings):
            for rep, val in enumerate(dm.values[i]):
                lines.append(f"{rep + 1} {angular_to_mhz(d)!r} {val!r}")
            lines.append("")
        atomic_write_text(out_dir / "diffmap.dat", "\n".join(lines) + "\n")
    print(f"wrote {out_dir / 'diffmap.csv'}")
    return EXIT_OK


def cmd_regimes(args) -> int:
    ts = _read_traces(args.data)
    cut = mhz_to_angular(args.cut_mhz) if args.cut_mhz is not None else ts.params.eit_peak
    bp = args.brk * 1e-3 if args.brk is not None else None
    report = detect_regimes(ts, cut, window=args.window, k_sigma=args.k_sigma,
                            m_consecutive=args.m_consecutive, breakpoint=bp)
    _emit(report.to_dict(), args.out)
    return EXIT_OK


def cmd_cut(args) -> int:
    ts = _read_traces(args.data)
    cut = mhz_to_angular(args.cut_mhz) if args.cut_mhz is not None else ts.params.eit_peak
    idx = int(np.argmin(np.abs(ts.detunings - cut)))
    sm = moving_average(ts, args.window)
    cols = ["repetition", "time_s"]
    cols += [f"transmission_{s}" for s in ts.slots]
    cols += [f"smoothed_{s}" for s in ts.slots]
    lines = [",".join(cols)]
    for rep in range(ts.n_reps):
        vals = [str(rep + 1), repr(float(ts.rep_times[rep]))]
        vals += [repr(float(ts.transmission[idx, rep, j])) for j in range(len(ts.slots))]
        vals += [repr(float(sm.transmission[idx, rep, j])) for j in range(len(ts.slots))]
        lines.append(",".join(vals))
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_stark(args) -> int:
    if (args.shift_mhz is None) == (args.field is None):
        raise ValidationError(["stark: give exactly one of --shift-mhz / --field"])
    if args.shift_mhz is not None:
        field = stark.field_from_shift(args.shift_mhz, args.alpha)
        out = {"shift_mhz": args.shift_mhz, "field_v_per_cm": field}
    else:
        shift = stark.shift_from_field(args.field, args.alpha)
        out = {"field_v_per_cm": args.field, "shift_mhz": shift}
    out["alpha_mhz_cm2_v2"] = args.alpha
    _emit(out, args.out)
    return EXIT_OK


def cmd_transport(args) -> int:
    ramp = conveyor.ConveyorRamp.linear(args.peak_khz * 1e3, args.duration_ms * 1e-3,
                                        args.wavelength_nm * 1e-9)
    t, df, v, x = conveyor.sample(ramp, args.points)
    lines = ["time_s,delta_f_hz,velocity_m_per_s,position_m"]
    lines += [f"{ti!r},{fi!r},{vi!r},{xi!r}" for ti, fi, vi, xi in zip(t, df, v, x)]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"total displacement: {conveyor.displacement(ramp) * 1e3:.4f} mm",
          file=sys.stderr)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    presets = presets_for_figure(args.figure, seed=args.seed if args.seed is not None else 42,
                                 n_workers=args.workers)
    try:
        all_ok = run_figure(args.figure, presets, args.out_dir)
    except ValidationError:
        raise
    except OSError:
        raise
    except Exception as exc:  # stage-tagged failure
        print(json.dumps({"errors": [f"{args.figure}: stage failed: {exc}"]}),
              file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote {Path(args.out_dir) / 'summary.txt'}"
          + ("" if all_ok else " (some anchors missed)"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibereit",
        description="Simulate and analyze pulsed Rydberg-EIT spectroscopy traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic trace set")
    sim.add_argument("--config", help="run-config JSON file")
    sim.add_argument("--preset", choices=PRESET_NAMES, default="inside")
    sim.add_argument("--mode", choices=(MODE_SINGLE, MODE_TWO), default=MODE_TWO)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--n-reps", type=int, default=None)
    sim.add_argument("--no-noise", action="store_true")
    sim.add_argument("--no-loss", action="store_true")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out-dir", default=".")
    sim.set_defaults(func=cmd_simulate)

    for kind in ("od", "eit"):
        fit = sub.add_parser(f"fit-{kind}", help=f"fit the {kind} model to averaged spectra")
        fit.add_argument("data", help="trace CSV written by simulate")
        fit.add_argument("--slot", choices=("eit", "od"), default="eit")
        fit.add_argument("--start-rep", type=int, default=1)
        fit.add_argument("--count", type=int, default=20)
        if kind == "od":
            fit.add_argument("--fit-gamma", action="store_true")
        fit.add_argument("--out", default=None)
        fit.set_defaults(func=cmd_fit, kind=kind)

    dec = sub.add_parser("fit-decay", help="two-segment decay fit at a fixed detuning")
    dec.add_argument("data")
    dec.add_argument("--cut-mhz", type=float, default=None)
    dec.add_argument("--break", dest="brk", type=float, default=None,
                     help="fixed breakpoint (ms); default: grid search")
    dec.add_argument("--window", type=int, default=20)
    dec.add_argument("--out", default=None)
    dec.set_defaults(func=cmd_fit_decay)

    dm = sub.add_parser("diffmap", help="EIT-minus-OD difference map")
    dm.add_argument("data")
    dm.add_argument("--window", type=int, default=20)
    dm.add_argument("--gnuplot", action="store_true")
    dm.add_argument("--out-dir", default=".")
    dm.set_defaults(func=cmd_diffmap)

    reg = sub.add_parser("regimes", help="two-regime report at a fixed detuning")
    reg.add_argument("data")
    reg.add_argument("--cut-mhz", type=float, default=None)
    reg.add_argument("--break", dest="brk", type=float, default=None)
    reg.add_argument("--window", type=int, default=20)
    reg.add_argument("--k-sigma", type=float, default=2.0)
    reg.add_argument("--m-consecutive", type=int, default=20)
    reg.add_argument("--out", default=None)
    reg.set_defaults(func=cmd_regimes)

    cut = sub.add_parser("cut", help="fixed-detuning time series")
    cut.add_argument("data")
    cut.add_argument("--cut-mhz", type=float, default=None)
    cut.add_argument("--window", type=int, default=20)
    cut.add_argument("--out", default=None)
    cut.set_defaults(func=cmd_cut)

    st = sub.add_parser("stark", help="Stark shift <-> electric field")
    st.add_argument("--shift-mhz", type=float, default=None)
    st.add_argument("--field", type=float, default=None, help="V/cm")
    st.add_argument("--alpha", type=float, default=stark.ALPHA_29S)
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_stark)

    tr = sub.add_parser("transport", help="conveyor-belt ramp kinematics")
    tr.add_argument("--peak-khz", type=float, default=500.0)
    tr.add_argument("--duration-ms", type=float, default=100.0)
    tr.add_argument("--wavelength-nm", type=float, default=805.0)
    tr.add_argument("--points", type=int, default=101)
    tr.add_argument("--out", default=None)
    tr.set_defaults(func=cmd_transport)

    rep = sub.add_parser("reproduce", help="run a full figure pipeline")
    rep.add_argument("figure", choices=FIGURES)
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--workers", type=int, default=1)
    rep.add_argument("--out-dir", default=".")
    rep.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(json.dumps({"errors": exc.problems}), file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(json.dumps({"errors": [str(exc)]}), file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(json.dumps({"errors": [f"io: {exc}"]}), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
