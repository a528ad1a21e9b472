"""Run configuration: the JSON schema driving the CLI pipelines.

A run config merges the spectral parameters, sequence settings, loss model
and analysis options.  Loading validates everything before any computation
and rejects unknown keys, collecting one message per offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .sequence import LossModel, SequenceConfig, ValidationError
from .spectral import EitParams
from .traceio import (eit_params_from_dict, eit_params_to_dict, loss_from_dict,
                      loss_to_dict, sequence_from_dict, sequence_to_dict)
from .units import angular_to_mhz, mhz_to_angular

SCHEMA_VERSION = 1

_SECTION_KEYS = {
    "eit_params": {"od", "gamma_mhz", "omega_c_mhz", "delta_c_mhz",
                   "gamma_ryd_mhz", "offset_mhz"},
    "sequence": {"detuning_grid_mhz", "n_reps", "t_probe_s", "t_hold_s", "mode",
                 "probe_power_w", "probe_rabi_mhz", "detection_efficiency",
                 "rng_seed", "noise", "n_workers"},
    "loss": {"od0", "tau1_s", "tau2_s", "t_break_s", "loss_center_mhz",
             "loss_width_mhz", "loss_amp", "eit_loss_boost"},
    "analysis": {"window", "cut_detuning_mhz", "early_block", "late_block",
                 "k_sigma", "m_consecutive", "breakpoint_s"},
}
_TOP_KEYS = {"schema_version"} | set(_SECTION_KEYS)


@dataclass(frozen=True)
class AnalysisOptions:
    window: int = 20
    cut_detuning: float | None = None      # rad/s; None: use the EIT peak
    early_block: tuple[int, int] = (1, 20)
    late_block: tuple[int, int] | None = None
    k_sigma: float = 2.0
    m_consecutive: int = 20
    breakpoint: float | None = None        # s; None: grid search

    def check(self) -> list[str]:
        p = []
        if self.window < 1:
            p.append("window: must be >= 1")
        if self.k_sigma <= 0:
            p.append("k_sigma: must be > 0")
        if self.m_consecutive < 1:
            p.append("m_consecutive: must be >= 1")
        for name, block in (("early_block", self.early_block),
                            ("late_block", self.late_block)):
            if block is not None and (len(block) != 2 or block[0] < 1 or block[1] < 1):
                p.append(f"{name}: must be [start_rep >= 1, count >= 1]")
        if self.breakpoint is not None and self.breakpoint <= 0:
            p.append("breakpoint_s: must be > 0")
        return p


@dataclass(frozen=True)
class RunConfig:
    eit: EitParams
    sequence: SequenceConfig
    loss: LossModel
    analysis: AnalysisOptions = AnalysisOptions()

    def cut_detuning(self) -> float:
        if self.analysis.cut_detuning is not None:
            return self.analysis.cut_detuning
        return self.eit.eit_peak


def analysis_to_dict(a: AnalysisOptions) -> dict:
    return {
        "window": a.window,
        "cut_detuning_mhz": None if a.cut_detuning is None else angular_to_mhz(a.cut_detuning),
        "early_block": list(a.early_block),
        "late_block": None if a.late_block is None else list(a.late_block),
        "k_sigma": a.k_sigma,
        "m_consecutive": a.m_consecutive,
        "breakpoint_s": a.breakpoint,
    }


def analysis_from_dict(d: dict) -> AnalysisOptions:
    cut = d.get("cut_detuning_mhz")
    late = d.get("late_block")
    return AnalysisOptions(
        window=int(d.get("window", 20)),
        cut_detuning=None if cut is None else mhz_to_angular(float(cut)),
        early_block=tuple(d.get("early_block", (1, 20))),
        late_block=None if late is None else tuple(late),
        k_sigma=float(d.get("k_sigma", 2.0)),
        m_consecutive=int(d.get("m_consecutive", 20)),
        breakpoint=d.get("breakpoint_s"),
    )


def run_config_to_dict(rc: RunConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "eit_params": eit_params_to_dict(rc.eit),
        "sequence": sequence_to_dict(rc.sequence),
        "loss": loss_to_dict(rc.loss),
        "analysis": analysis_to_dict(rc.analysis),
    }


def run_config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON document, validating keys and
    all sub-invariants; raises ValidationError listing every problem."""
    problems = []
    if not isinstance(data, dict):
        raise ValidationError(["config: top level must be a JSON object"])
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    for key in data:
        if key not in _TOP_KEYS:
            problems.append(f"{key}: unknown top-level key")
    for section, allowed in _SECTION_KEYS.items():
        content = data.get(section)
        if content is None:
            continue
        if not isinstance(content, dict):
            problems.append(f"{section}: must be a JSON object")
            continue
        for key in content:
            if key not in allowed:
                problems.append(f"{section}.{key}: unknown key")
    if problems:
        raise ValidationError(problems)

    defaults = run_config_to_dict(default_run_config())
    parts = {}
    for section, builder in (("eit_params", eit_params_from_dict),
                             ("sequence", sequence_from_dict),
                             ("loss", loss_from_dict),
                             ("analysis", analysis_from_dict)):
        merged = dict(defaults[section])
        merged.update(data.get(section, {}))
        try:
            parts[section] = builder(merged)
        except ValidationError as exc:
            problems.extend(f"{section}.{msg}" for msg in exc.problems)
        except (ValueError, TypeError, KeyError) as exc:
            problems.append(f"{section}: {exc}")
    if not problems and isinstance(parts.get("analysis"), AnalysisOptions):
        problems.extend(f"analysis.{m}" for m in parts["analysis"].check())
    if problems:
        raise ValidationError(problems)
    return RunConfig(eit=parts["eit_params"], sequence=parts["sequence"],
                     loss=parts["loss"], analysis=parts["analysis"])


def load_run_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError([f"config: invalid JSON ({exc})"])
    return run_config_from_dict(data)


def save_run_config(rc: RunConfig, path: str | Path) -> None:
    from .traceio import atomic_write_text

    atomic_write_text(path, json.dumps(run_config_to_dict(rc), indent=2) + "\n")


def default_run_config() -> RunConfig:
    """Neutral defaults; the presets module builds the paper-like setups."""
    return RunConfig(
        eit=EitParams(od=19.0, gamma=mhz_to_angular(6.07),
                      omega_c=mhz_to_angular(9.5), delta_c=0.0,
                      gamma_ryd=mhz_to_angular(2.65), offset=0.0),
        sequence=SequenceConfig(),
        loss=LossModel(od0=19.0),
        analysis=AnalysisOptions(),
    )
