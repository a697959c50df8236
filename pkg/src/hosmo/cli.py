"""Command-line front end.

``hosmo check | transform | synthesize | simulate | reconstruct``.  Input is
a scenario JSON (a ``"system"`` object plus optional ``x0``,
``disturbance``, ``gains``, ``step``, ``horizon`` and ``reconstruction``
entries) or a bare system JSON.  Without ``--input`` the bundled aircraft
scenario is used.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import aircraft
from .errors import HosmoError, ValidationError
from .linalg import DEFAULT_TOL, RankTolerance
from .model import LtiSystem, check_observer_matching, is_strongly_observable, parse_json
from .normalform import NormalFormResult, transform, validate_structure
from .observer import INJECTION_KINDS, check_gain_condition, synthesize
from .sim import (
    DEFAULT_STEP,
    INTEGRATORS,
    DisturbanceSpec,
    FeedbackSpec,
    Scenario,
    augment_for_input_reconstruction,
    eval_disturbance,
    simulate,
)

COMMANDS = ("check", "transform", "synthesize", "simulate", "reconstruct")
STEP_RANGE = (1e-6, 1e-2)
DEFAULT_HORIZON = 10.0


@dataclass(frozen=True)
class RunConfig:
    """Parsed and range-checked command line."""

    command: str
    input: Path | None = None
    output: Path | None = None
    summary: Path | None = None
    normal_form: Path | None = None
    tol_rank: float | None = None
    step: float | None = None
    horizon: float | None = None
    gains: list | None = None
    disturbance: object = None
    closed_loop: bool = False
    exact_init: bool = False
    injection: str = "discontinuous"
    q: float = -0.5
    integrator: str = "imex"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.step is not None and not STEP_RANGE[0] <= self.step <= STEP_RANGE[1]:
            raise ValidationError(f"step must lie in [{STEP_RANGE[0]:g}, {STEP_RANGE[1]:g}]")
        if self.horizon is not None and not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValidationError("horizon must be positive")
        if not -1.0 < self.q < 0.0:
            raise ValidationError("q must lie in (-1, 0)")
        if self.tol_rank is not None and not 0.0 < self.tol_rank < 1.0:
            raise ValidationError("rank tolerance must lie in (0, 1)")
        if self.injection not in INJECTION_KINDS:
            raise ValidationError(f"injection must be one of {INJECTION_KINDS}")
        if self.integrator not in INTEGRATORS:
            raise ValidationError(f"integrator must be one of {INTEGRATORS}")

    @property
    def tol(self) -> RankTolerance:
        return DEFAULT_TOL if self.tol_rank is None else RankTolerance(self.tol_rank)


def _fmt(v) -> str:
    v = complex(v)
    if v.imag == 0:
        return repr(v.real)
    return f"{v.real!r}{'+' if v.imag >= 0 else '-'}{abs(v.imag)!r}j"


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc


def _write(path: Path | None, text: str, out) -> None:
    if path is None:
        out.write(text)
        return
    try:
        path.write_text(text)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc.strerror}") from exc


def load_scenario_data(cfg: RunConfig) -> dict:
    """Scenario dictionary; a bare system is wrapped as ``{"system": ...}``."""
    if cfg.input is None:
        return aircraft.data()
    data = parse_json(_read(cfg.input))
    if not isinstance(data, dict):
        raise ValidationError("input must be a JSON object")
    return data if "system" in data else {"system": data}


def _disturbance(data: dict, cfg: RunConfig, m: int) -> DisturbanceSpec:
    d = cfg.disturbance if cfg.disturbance is not None else data.get("disturbance")
    if d is None:
        return DisturbanceSpec.zero(m)
    if isinstance(d, dict):
        return DisturbanceSpec.from_dict(d)
    try:
        return DisturbanceSpec.constant(np.broadcast_to(np.asarray(d, dtype=float), (m,)))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid disturbance: {exc}") from exc


def _load_nf(cfg: RunConfig) -> NormalFormResult | None:
    if cfg.normal_form is None:
        return None
    return NormalFormResult.from_json(_read(cfg.normal_form))


def cmd_check(cfg: RunConfig, out) -> int:
    plant = LtiSystem.from_dict(load_scenario_data(cfg)["system"])
    verdict = is_strongly_observable(plant, cfg.tol)
    ev = np.linalg.eigvals(plant.A)
    ev = ev[np.lexsort((ev.imag, ev.real))]
    unstable = [e for e in ev if e.real >= -cfg.tol.relative * max(1.0, np.max(np.abs(ev)))]
    out.write(f"dimensions: n = {plant.n}, known inputs = {plant.q}, "
              f"unknown inputs = {plant.m}, outputs = {plant.p}\n")
    out.write(f"feedthrough: {'yes' if plant.has_feedthrough else 'no'}\n")
    out.write(f"strongly observable: {'yes' if verdict else 'no'}\n")
    if not verdict and verdict.witness is not None:
        out.write(f"  rank drop at s = {_fmt(verdict.witness)}\n")
    out.write(f"matching condition: {'yes' if check_observer_matching(plant, cfg.tol) else 'no'}\n")
    out.write("eigenvalues of A:\n")
    for e in ev:
        out.write(f"  {_fmt(e)}\n")
    out.write("unstable eigenvalues: " + (", ".join(_fmt(e) for e in unstable) or "none") + "\n")
    return 0 if verdict else 2


def cmd_transform(cfg: RunConfig, out) -> int:
    plant = LtiSystem.from_dict(load_scenario_data(cfg)["system"])
    nf = transform(plant, cfg.tol)
    text = nf.to_json(indent=1) + "\n"
    info = sys.stderr if cfg.output is None else out
    _write(cfg.output, text, out)
    violations = validate_structure(nf)
    info.write(f"mu = {tuple(nf.mu)}\n")
    if nf.permutation and list(nf.permutation) != sorted(nf.permutation):
        info.write(f"subsystem order (output indices): {tuple(nf.permutation)}\n")
    if plant.has_feedthrough:
        info.write(f"feedthrough reduction applied: rank F = {nf.m_F}, "
                   f"{plant.p - nf.m_F} outputs feed the observer\n")
    if violations:
        worst = max(v.magnitude for v in violations)
        info.write(f"structural validation: {len(violations)} violations, worst {worst!r}\n")
        return 3
    info.write("structural validation: passed\n")
    return 0


def _observer_parts(data: dict, cfg: RunConfig, reconstruct: bool):
    """Plant, normal form and observer for the requested pipeline."""
    plant = LtiSystem.from_dict(data["system"])
    rec = data.get("reconstruction", {})
    if reconstruct:
        dist = _disturbance(data, cfg, plant.m)
        L = rec.get("ddot_bound")
        if L is None:
            L = float(max(np.max(dist.derivative_bound(), initial=0.0), 1e-6))
        observed = augment_for_input_reconstruction(plant, L)
        gains_default = rec.get("gains")
    else:
        observed = plant
        gains_default = data.get("gains")
    nf = _load_nf(cfg)
    if nf is None:
        nf = transform(observed, cfg.tol)
    if nf.n != observed.n:
        raise ValidationError(f"normal form has order {nf.n}, expected {observed.n}")
    gains = cfg.gains if cfg.gains is not None else gains_default
    obs = synthesize(nf, observed.bounds, gains, cfg.injection, cfg.q)
    return plant, observed, nf, obs


def cmd_synthesize(cfg: RunConfig, out) -> int:
    data = load_scenario_data(cfg)
    _, observed, nf, obs = _observer_parts(data, cfg, reconstruct=False)
    gc = check_gain_condition(obs, nf.Dbar, observed.bounds)
    doc = obs.to_dict()
    doc["mu"] = list(nf.mu)
    doc["gain_margins"] = gc.margins.tolist()
    doc["gain_condition"] = gc.satisfied
    _write(cfg.output, json.dumps(doc, indent=2) + "\n", out)
    if not gc:
        _warn_gains(gc.margins)
    return 0


def _warn_gains(margins) -> None:
    for j, mg in enumerate(margins, start=1):
        if mg <= 0:
            sys.stderr.write(f"warning: gain condition violated in subsystem {j} "
                             f"(margin {float(mg)!r}); convergence is not guaranteed\n")


def _run(cfg: RunConfig, out, reconstruct: bool) -> int:
    data = load_scenario_data(cfg)
    plant, observed, nf, obs = _observer_parts(data, cfg, reconstruct)
    x0 = np.asarray(data.get("x0", np.zeros(plant.n)), dtype=float)
    dist = _disturbance(data, cfg, plant.m)
    control = None
    if cfg.closed_loop:
        if not reconstruct:
            raise ValidationError("--closed-loop needs the reconstruct command")
        rec = data.get("reconstruction", {})
        if "K" not in rec:
            raise ValidationError("scenario has no feedback gain K")
        control = FeedbackSpec(rec["K"], rec.get("h", np.zeros(plant.q)))
    xhat0 = None
    if cfg.exact_init:
        full = np.concatenate([x0, eval_disturbance(dist, 0.0)]) if reconstruct else x0
        xhat0 = nf.T_inv @ full
    bounds = observed.bounds if reconstruct else None
    sc = Scenario(
        plant=plant, nf=nf, observer=obs, x0=x0, xhat0=xhat0, disturbance=dist, control=control,
        step=cfg.step if cfg.step is not None else data.get("step", DEFAULT_STEP),
        horizon=cfg.horizon if cfg.horizon is not None else data.get("horizon", DEFAULT_HORIZON),
        reconstruct=reconstruct, observer_bounds=bounds, integrator=cfg.integrator,
    )
    gc = check_gain_condition(obs, nf.Dbar, sc.observer_bounds)
    if not gc:
        _warn_gains(gc.margins)
    trace = simulate(sc)
    _write(cfg.output, trace.to_csv(), out)
    summary = json.dumps(_json_safe(trace.summary), indent=2) + "\n"
    if cfg.summary is not None:
        _write(cfg.summary, summary, out)
    else:
        (sys.stderr if cfg.output is None else out).write(summary)
    return 0


def _json_safe(value):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def cmd_simulate(cfg: RunConfig, out) -> int:
    return _run(cfg, out, reconstruct=False)


def cmd_reconstruct(cfg: RunConfig, out) -> int:
    return _run(cfg, out, reconstruct=True)


_HANDLERS = {
    "check": cmd_check,
    "transform": cmd_transform,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
}


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc.msg}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hosmo", description="Sliding-mode unknown-input observers for LTI systems."
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--input", type=Path, help="scenario or system JSON (default: bundled aircraft)")
    parser.add_argument("--output", type=Path, help="output file (default: stdout)")
    parser.add_argument("--summary", type=Path, help="summary JSON file for simulate/reconstruct")
    parser.add_argument("--normal-form", type=Path, help="normal-form JSON written by transform")
    parser.add_argument("--tol-rank", type=float, help="relative singular-value cut-off")
    parser.add_argument("--step", type=float, help="integration step in seconds")
    parser.add_argument("--horizon", type=float, help="simulated time in seconds")
    parser.add_argument("--gains", type=_json_arg,
                        help="JSON list of per-subsystem gain lists; null entries take defaults")
    parser.add_argument("--disturbance", type=_json_arg,
                        help="JSON number, list or disturbance object overriding the scenario")
    parser.add_argument("--closed-loop", action="store_true", help="apply the scenario feedback")
    parser.add_argument("--exact-init", action="store_true", help="start the observer at the true state")
    parser.add_argument("--injection", choices=INJECTION_KINDS, default="discontinuous")
    parser.add_argument("--q", type=float, default=-0.5, help="homogeneity degree in (-1, 0)")
    parser.add_argument("--integrator", choices=INTEGRATORS, default="imex")
    return parser


def main(argv=None, out=None) -> int:
    """Run one command; returns the process exit code."""
    out = sys.stdout if out is None else out
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig(**{k: v for k, v in vars(ns).items()})
        return _HANDLERS[cfg.command](cfg, out)
    except HosmoError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        witness = getattr(exc, "witness", None)
        if witness is not None:
            sys.stderr.write(f"  rank drop at s = {_fmt(witness)}\n")
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
