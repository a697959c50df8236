"""Bundled lateral aircraft example.

Seven states, two control inputs, two measured outputs and one unknown
input (a rudder actuator fault).  The plant is open-loop unstable.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np

from .model import LtiSystem
from .normalform import NormalFormResult, transform
from .observer import ObserverConfig, synthesize
from .sim import DisturbanceSpec, FeedbackSpec, Scenario, augment_for_input_reconstruction


@lru_cache(maxsize=1)
def _raw_text() -> str:
    return resources.files("hosmo").joinpath("data/aircraft.json").read_text()


def data() -> dict:
    """Fresh copy of the bundled constants."""
    return json.loads(_raw_text())


def system() -> LtiSystem:
    return LtiSystem.from_dict(data()["system"])


def disturbance() -> DisturbanceSpec:
    return DisturbanceSpec.from_dict(data()["disturbance"])


def x0() -> np.ndarray:
    return np.array(data()["x0"], dtype=float)


def observer_scenario(gains=None, injection="discontinuous", q: float = -0.5, **overrides) -> Scenario:
    """State-estimation run: zero input, zero initial estimate."""
    d = data()
    plant = system()
    nf = transform(plant)
    cfg = synthesize(nf, plant.bounds, d["gains"] if gains is None else gains, injection, q)
    kw = dict(plant=plant, nf=nf, observer=cfg, x0=x0(), disturbance=disturbance(),
              step=d["step"], horizon=d["horizon"])
    kw.update(overrides)
    return Scenario(**kw)


def reconstruction_scenario(closed_loop: bool = True, gains=None, ddot_bound=None,
                            **overrides) -> Scenario:
    """Input-reconstruction run, optionally with disturbance-compensating feedback."""
    d = data()
    rec = d["reconstruction"]
    plant = system()
    L = rec["ddot_bound"] if ddot_bound is None else ddot_bound
    aug = augment_for_input_reconstruction(plant, L)
    nf = transform(aug)
    cfg = synthesize(nf, aug.bounds, rec["gains"] if gains is None else gains)
    control = FeedbackSpec(rec["K"], rec["h"]) if closed_loop else None
    kw = dict(plant=plant, nf=nf, observer=cfg, x0=x0(), disturbance=disturbance(),
              control=control, step=d["step"], horizon=d["horizon"], reconstruct=True,
              observer_bounds=aug.bounds)
    kw.update(overrides)
    return Scenario(**kw)


def feedback() -> FeedbackSpec:
    rec = data()["reconstruction"]
    return FeedbackSpec(rec["K"], rec["h"])


__all__ = [
    "NormalFormResult", "ObserverConfig", "data", "system", "disturbance", "x0",
    "observer_scenario", "reconstruction_scenario", "feedback",
]
