"""Versioned on-disk format for trace sets.

A trace set is written as a CSV of (detuning_mhz, repetition, slot,
transmission) rows plus a JSON sidecar holding the full configuration and
the ground-truth OD trajectory.  Floats are written with ``repr`` so values
survive a write/read cycle bit-exactly; human-facing frequencies are in MHz
while the sidecar also carries the exact internal detuning grid.  Files are
written atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .sequence import LossModel, SequenceConfig, TraceSet, ValidationError, ground_truth_od
from .spectral import EitParams
from .units import angular_to_mhz, mhz_to_angular

FORMAT_VERSION = 1

CSV_HEADER = "detuning_mhz,repetition,slot,transmission"


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` via a same-directory temp file + rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def eit_params_to_dict(p: EitParams) -> dict:
    return {
        "od": p.od,
        "gamma_mhz": angular_to_mhz(p.gamma),
        "omega_c_mhz": angular_to_mhz(p.omega_c),
        "delta_c_mhz": angular_to_mhz(p.delta_c),
        "gamma_ryd_mhz": angular_to_mhz(p.gamma_ryd),
        "offset_mhz": angular_to_mhz(p.offset),
    }


def eit_params_from_dict(d: dict) -> EitParams:
    return EitParams(
        od=float(d["od"]),
        gamma=mhz_to_angular(float(d["gamma_mhz"])),
        omega_c=mhz_to_angular(float(d["omega_c_mhz"])),
        delta_c=mhz_to_angular(float(d["delta_c_mhz"])),
        gamma_ryd=mhz_to_angular(float(d["gamma_ryd_mhz"])),
        offset=mhz_to_angular(float(d["offset_mhz"])),
    )


def sequence_to_dict(s: SequenceConfig) -> dict:
    return {
        "detuning_grid_mhz": [angular_to_mhz(v) for v in s.detuning_grid],
        "n_reps": s.n_reps,
        "t_probe_s": s.t_probe,
        "t_hold_s": s.t_hold,
        "mode": s.mode,
        "probe_power_w": s.probe_power,
        "probe_rabi_mhz": angular_to_mhz(s.probe_rabi),
        "detection_efficiency": s.detection_efficiency,
        "rng_seed": s.rng_seed,
        "noise": s.noise,
        "n_workers": s.n_workers,
    }


def sequence_from_dict(d: dict, detuning_grid=None) -> SequenceConfig:
    grid = (np.asarray(detuning_grid, dtype=float) if detuning_grid is not None
            else mhz_to_angular(np.asarray(d["detuning_grid_mhz"], dtype=float)))
    return SequenceConfig(
        detuning_grid=grid,
        n_reps=int(d["n_reps"]),
        t_probe=float(d["t_probe_s"]),
        t_hold=float(d["t_hold_s"]),
        mode=str(d["mode"]),
        probe_power=float(d["probe_power_w"]),
        probe_rabi=mhz_to_angular(float(d["probe_rabi_mhz"])),
        detection_efficiency=float(d["detection_efficiency"]),
        rng_seed=int(d["rng_seed"]),
        noise=bool(d["noise"]),
        n_workers=int(d["n_workers"]),
    )


def loss_to_dict(l: LossModel) -> dict:
    return {
        "od0": l.od0,
        "tau1_s": l.tau1,
        "tau2_s": l.tau2,
        "t_break_s": l.t_break,
        "loss_center_mhz": None if l.loss_center is None else angular_to_mhz(l.loss_center),
        "loss_width_mhz": angular_to_mhz(l.loss_width),
        "loss_amp": l.loss_amp,
        "eit_loss_boost": l.eit_loss_boost,
    }


def loss_from_dict(d: dict) -> LossModel:
    center = d.get("loss_center_mhz")
    return LossModel(
        od0=float(d["od0"]),
        tau1=float(d["tau1_s"]),
        tau2=float(d["tau2_s"]),
        t_break=float(d["t_break_s"]),
        loss_center=None if center is None else mhz_to_angular(float(center)),
        loss_width=mhz_to_angular(float(d["loss_width_mhz"])),
        loss_amp=float(d["loss_amp"]),
        eit_loss_boost=float(d["eit_loss_boost"]),
    )


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def sidecar_path_for(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_traceset(ts: TraceSet, csv_path: str | Path,
                   sidecar_path: str | Path | None = None) -> tuple[Path, Path]:
    """Write the trace CSV and its JSON sidecar; returns both paths."""
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else sidecar_path_for(csv_path)

    lines = [CSV_HEADER]
    det_mhz = [repr(angular_to_mhz(v)) for v in ts.detunings]
    for i in range(ts.detunings.size):
        for rep in range(ts.n_reps):
            for j, slot in enumerate(ts.slots):
                lines.append(
                    f"{det_mhz[i]},{rep + 1},{slot},{ts.transmission[i, rep, j]!r}")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")

    sidecar = {
        "format_version": FORMAT_VERSION,
        "slots": list(ts.slots),
        "eit_params": eit_params_to_dict(ts.params),
        "sequence": sequence_to_dict(ts.sequence),
        "loss": loss_to_dict(ts.loss),
        "detunings_rad_per_s": [float(v) for v in ts.detunings],
        "od_true": [float(v) for v in ts.od_true],
    }
    atomic_write_text(sidecar_path,
                      json.dumps(sidecar, indent=2, default=_json_default) + "\n")
    return csv_path, sidecar_path


def read_traceset(csv_path: str | Path,
                  sidecar_path: str | Path | None = None) -> TraceSet:
    """Rebuild a TraceSet from its CSV and sidecar.

    Transmission values and the detuning grid are restored bit-exactly; the
    per-run ground truth OD is recomputed from the stored configuration.
    """
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else sidecar_path_for(csv_path)
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    version = sidecar.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError([f"format_version: expected {FORMAT_VERSION}, got {version}"])

    params = eit_params_from_dict(sidecar["eit_params"])
    detunings = np.asarray(sidecar["detunings_rad_per_s"], dtype=float)
    seq = sequence_from_dict(sidecar["sequence"], detuning_grid=detunings)
    loss = loss_from_dict(sidecar["loss"])
    slots = tuple(sidecar["slots"])
    od_true = np.asarray(sidecar["od_true"], dtype=float)

    n_det, n_reps, n_slots = detunings.size, seq.n_reps, len(slots)
    transmission = np.empty((n_det, n_reps, n_slots))
    slot_index = {s: j for j, s in enumerate(slots)}
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValidationError([f"csv: unexpected header {header!r}"])
        row = 0
        for line in fh:
            line = line.strip()
            if not line:
                continue
            _, rep_s, slot, value = line.split(",")
            i = row // (n_reps * n_slots)
            transmission[i, int(rep_s) - 1, slot_index[slot]] = float(value)
            row += 1
    if row != n_det * n_reps * n_slots:
        raise ValidationError([f"csv: expected {n_det * n_reps * n_slots} rows, got {row}"])

    _, od_run = ground_truth_od(params, seq, loss)
    return TraceSet(detunings=detunings, transmission=transmission,
                    od_true=od_true, od_run=od_run, slots=slots,
                    params=params, sequence=seq, loss=loss)


def traceset_equal(a: TraceSet, b: TraceSet) -> bool:
    """Format-contract equality: data arrays bit-exact, metadata equal in
    serialized (MHz) form."""
    return (
        np.array_equal(a.detunings, b.detunings)
        and np.array_equal(a.transmission, b.transmission)
        and np.array_equal(a.od_true, b.od_true)
        and a.slots == b.slots
        and eit_params_to_dict(a.params) == eit_params_to_dict(b.params)
        and sequence_to_dict(a.sequence) == sequence_to_dict(b.sequence)
        and loss_to_dict(a.loss) == loss_to_dict(b.loss)
    )
