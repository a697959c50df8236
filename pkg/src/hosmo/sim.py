"""Fixed-step simulation of plant and observer.

The default ``"imex"`` scheme advances plant and observer in normal-form
coordinates with one semi-implicit Euler splitting and resolves the
set-valued injection exactly at every step.  ``"euler"`` is plain explicit
Euler with the plant in original coordinates.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergedError, UnsupportedMultiInputError, ValidationError
from .model import LtiSystem, is_strongly_observable
from .normalform import NormalFormResult
from .observer import ObserverConfig, check_gain_condition, output_error, rhs_from_error

#: Magnitude at which a simulated state counts as diverged.
DIVERGENCE_LIMIT = 1e12

DEFAULT_STEP = 1e-4

INTEGRATORS = ("imex", "euler")


@dataclass(frozen=True)
class DisturbanceSpec:
    """``delta(t) = offset + sum_k amplitudes[:, k] sin(omegas[k] t + phases[:, k])``."""

    offset: np.ndarray
    amplitudes: np.ndarray = None
    omegas: np.ndarray = None
    phases: np.ndarray = None

    def __post_init__(self):
        offset = np.atleast_1d(np.asarray(self.offset, dtype=float))
        m = offset.shape[0]
        omegas = np.zeros(0) if self.omegas is None else np.atleast_1d(np.asarray(self.omegas, float))
        k = omegas.shape[0]
        amps = np.zeros((m, k)) if self.amplitudes is None else np.asarray(self.amplitudes, float)
        amps = amps.reshape(m, k)
        ph = np.zeros((m, k)) if self.phases is None else np.asarray(self.phases, float).reshape(m, k)
        for name, val in (("offset", offset), ("amplitudes", amps), ("omegas", omegas), ("phases", ph)):
            if not np.all(np.isfinite(val)):
                raise ValidationError(f"disturbance {name} must be finite")
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def zero(cls, m: int) -> "DisturbanceSpec":
        return cls(np.zeros(m))

    @classmethod
    def constant(cls, value) -> "DisturbanceSpec":
        return cls(np.atleast_1d(np.asarray(value, dtype=float)))

    @property
    def m(self) -> int:
        return self.offset.shape[0]

    def bound(self) -> np.ndarray:
        """Amplitude bound ``|offset| + sum |amplitudes|`` per channel."""
        return np.abs(self.offset) + np.abs(self.amplitudes).sum(axis=1)

    def derivative_bound(self) -> np.ndarray:
        """Bound of the time derivative per channel."""
        return np.abs(self.amplitudes) @ np.abs(self.omegas)

    def to_dict(self) -> dict:
        return {
            "offset": self.offset.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "omegas": self.omegas.tolist(),
            "phases": self.phases.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DisturbanceSpec":
        try:
            return cls(data["offset"], data.get("amplitudes"), data.get("omegas"), data.get("phases"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"invalid disturbance description: {exc}") from exc


def disturbance_rate(spec: DisturbanceSpec, t: float) -> np.ndarray:
    """Time derivative of the disturbance at ``t``."""
    if spec.omegas.size == 0:
        return np.zeros(spec.m)
    return np.sum(spec.amplitudes * spec.omegas * np.cos(spec.omegas * t + spec.phases), axis=1)


def eval_disturbance(spec: DisturbanceSpec, t: float) -> np.ndarray:
    """Value of the disturbance at time ``t``."""
    if spec.omegas.size == 0:
        return spec.offset.copy()
    return spec.offset + np.sum(spec.amplitudes * np.sin(spec.omegas * t + spec.phases), axis=1)


@dataclass(frozen=True)
class FeedbackSpec:
    """State feedback ``u = -(K xhat + h delta_hat)``."""

    K: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if h.shape[0] != K.shape[0]:
            raise ValidationError("h must have one entry per control input")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "h", h)

    def check_matched(self, plant: LtiSystem, atol: float = 1e-9) -> None:
        """Require ``D = B h`` whenever ``h`` is nonzero."""
        if not np.any(self.h):
            return
        if plant.m != 1:
            raise UnsupportedMultiInputError("disturbance compensation needs a scalar unknown input")
        D = plant.D[:, 0]
        if np.linalg.norm(D - plant.B @ self.h) > atol * max(1.0, np.linalg.norm(D)):
            raise ValidationError("disturbance is not matched: D != B h")


Control = Callable[[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a simulation run needs.

    ``xhat0`` is in normal-form coordinates.  With ``reconstruct`` the
    observer belongs to the plant augmented by its unknown input and its
    last original-coordinate state is the input estimate.  ``control`` is
    ``None`` (zero), a constant vector, a callable of time, or a
    :class:`FeedbackSpec`.  ``observer_bounds`` bound the unknown inputs
    the observer sees; they default to the plant bounds, or to the
    disturbance derivative bound when reconstructing.
    """

    plant: LtiSystem
    nf: NormalFormResult
    observer: ObserverConfig
    x0: np.ndarray
    xhat0: np.ndarray = None
    disturbance: DisturbanceSpec = None
    control: object = None
    step: float = DEFAULT_STEP
    horizon: float = 10.0
    reconstruct: bool = False
    observer_bounds: np.ndarray = None
    integrator: str = "imex"
    check_bounds: bool = True

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        N = n + m if self.reconstruct else n
        if self.reconstruct and m != 1:
            raise UnsupportedMultiInputError("input reconstruction needs a scalar unknown input")
        if self.nf.n != N or self.observer.n != N:
            raise ValidationError(f"observer order {self.nf.n} does not fit plant order {n}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ValidationError(f"x0 must have {n} entries")
        xhat0 = np.zeros(N) if self.xhat0 is None else np.asarray(self.xhat0, float).reshape(-1)
        if xhat0.shape != (N,):
            raise ValidationError(f"xhat0 must have {N} entries")
        dist = DisturbanceSpec.zero(m) if self.disturbance is None else self.disturbance
        if dist.m != m:
            raise ValidationError(f"disturbance has {dist.m} channels, plant has {m}")
        if not (self.step > 0 and np.isfinite(self.step)):
            raise ValidationError("step must be positive")
        if self.integrator not in INTEGRATORS:
            raise ValidationError(f"integrator must be one of {INTEGRATORS}")
        if self.reconstruct and self.plant.F is not None and np.any(self.plant.F):
            raise ValidationError("input reconstruction needs a plant without feedthrough")
        if not self.horizon >= self.step:
            raise ValidationError("horizon must be at least one step")
        if self.check_bounds and m and np.any(dist.bound() > self.plant.bounds * (1 + 1e-12)):
            raise ValidationError("disturbance exceeds the plant's unknown-input bounds")
        if isinstance(self.control, FeedbackSpec):
            if not self.reconstruct and np.any(self.control.h):
                raise ValidationError("disturbance compensation needs the reconstructing observer")
            if self.control.K.shape != (self.plant.q, n):
                raise ValidationError(f"K must be {self.plant.q}x{n}")
            self.control.check_matched(self.plant)
        if self.observer_bounds is None:
            ob = dist.derivative_bound() if self.reconstruct else self.plant.bounds
        else:
            ob = np.atleast_1d(np.asarray(self.observer_bounds, dtype=float))
        if ob.shape != (self.nf.Dbar.shape[1],):
            raise ValidationError("one observer bound per observer unknown input required")
        object.__setattr__(self, "observer_bounds", ob)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xhat0", xhat0)
        object.__setattr__(self, "disturbance", dist)

    def replace(self, **changes) -> "Scenario":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return Scenario(**kw)


@dataclass(frozen=True, eq=False)
class Trace:
    """Recorded simulation; row ``k`` belongs to ``times[k]``.

    ``xhat`` and ``eta = x - xhat`` are in original coordinates.
    """

    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    eta: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    delta_hat: np.ndarray | None = None
    summary: dict = field(default_factory=dict)

    def window(self, t0: float, t1: float = np.inf) -> np.ndarray:
        """Boolean mask of the samples with ``t0 <= t <= t1``."""
        return (self.times >= t0 - 1e-12) & (self.times <= t1 + 1e-12)

    def to_csv(self) -> str:
        n = self.x.shape[1]
        header = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"xhat{i}" for i in range(1, n + 1)]
        header += [f"eta{i}" for i in range(1, n + 1)]
        cols = [self.times[:, None], self.x, self.xhat, self.eta]
        if self.delta_hat is not None:
            header.append("delta_hat")
            cols.append(self.delta_hat[:, None])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in np.hstack(cols):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2)


def _control_fn(control):
    if control is None:
        return lambda t: None
    if callable(control):
        return lambda t: np.asarray(control(t), dtype=float).reshape(-1)
    c = np.asarray(control, dtype=float).reshape(-1)
    return lambda t: c


def simulate(sc: Scenario) -> Trace:
    """Integrate plant and observer at a fixed step.

    ``sc.integrator`` selects the scheme.  ``"imex"`` integrates plant and
    observer in normal-form coordinates with the same semi-implicit Euler
    splitting (chain shift implicit, rest explicit), and resolves the
    observer's set-valued injection exactly; see
    :class:`~hosmo.observer.ImplicitStep`.  ``"euler"`` is plain explicit
    Euler, the plant in original coordinates.

    Raises
    ------
    DivergedError
        If any state magnitude exceeds :data:`DIVERGENCE_LIMIT`.
    """
    plant, nf, cfg = sc.plant, sc.nf, sc.observer
    n, q = plant.n, plant.q
    C, F = plant.C, plant.F
    h = sc.step
    steps = int(round(sc.horizon / h))
    feedback = sc.control if isinstance(sc.control, FeedbackSpec) else None
    open_loop = None if feedback else _control_fn(sc.control)
    T, Ti = nf.T, nf.T_inv
    N = nf.n
    dist = sc.disturbance

    # augmented plant state chi = (x, delta) driven by the disturbance rate
    if sc.reconstruct:
        A = np.block([[plant.A, plant.D], [np.zeros((1, n + 1))]])
        B = np.vstack([plant.B, np.zeros((1, q))])
        D = np.zeros((n + 1, 1))
        D[n, 0] = 1.0
        z0 = np.concatenate([sc.x0, eval_disturbance(dist, 0.0)])
        drive = lambda t: disturbance_rate(dist, t)  # noqa: E731
    else:
        A, B, D = plant.A, plant.B, plant.D
        z0 = sc.x0
        drive = lambda t: eval_disturbance(dist, t)  # noqa: E731

    imex = sc.integrator == "imex"
    if imex:
        from .observer import ImplicitStep

        obs_step = ImplicitStep(cfg, h)
        matched = plant.F is None
        if matched:
            # in normal-form coordinates the plant matrices are Abar, Bbar, Dbar;
            # sharing the observer's arithmetic keeps a zero error exactly zero
            Dp = nf.Dbar
        else:
            from .observer import chain_shift

            Ap = Ti @ A @ T - chain_shift(nf.mu)
            Bp, Dp = Ti @ B, Ti @ D
        z = Ti @ z0
    else:
        z = z0.copy()

    times = np.arange(steps + 1) * h
    X = np.empty((steps + 1, n))
    Xh = np.empty((steps + 1, N))
    Y = np.empty((steps + 1, plant.p))
    S = np.empty((steps + 1, nf.p))
    U = np.zeros((steps + 1, q))
    Dl = np.empty((steps + 1, plant.m))

    def measure(z, t):
        full = T @ z if imex else z
        x = full[:n]
        delta = full[n:] if sc.reconstruct else eval_disturbance(dist, t)
        y = C @ x
        if F is not None:
            y = y + F @ delta
        return x, delta, y

    xb = sc.xhat0.copy()
    zero_u = np.zeros(q)
    x, delta, y = measure(z, 0.0)
    yb = nf.Cbar @ z if imex else None
    for k in range(steps + 1):
        t = times[k]
        xh = T @ xb
        if feedback is not None:
            u = -(feedback.K @ xh[:n])
            if sc.reconstruct:
                u = u - feedback.h * xh[n]
        else:
            u = open_loop(t)
            if u is None:
                u = zero_u
        X[k], Xh[k], Y[k], U[k], Dl[k] = x, xh, y, u, delta
        S[k] = output_error(xb, y, cfg)
        if k == steps:
            break
        w = drive(t)
        if imex:
            if matched:
                c = obs_step.explicit_part(z, yb, u, y, Dp @ w)
            else:
                c = z + h * (Ap @ z + Dp @ w + (Bp @ u if q else 0.0))
            z = obs_step.chain_solve(c)
            x_n, delta_n, y_n = measure(z, t + h)
            # ybar = Gamma C T z = Cbar z; the short form avoids cancellation
            yb_n = nf.Cbar @ z
            xb = obs_step(xb, yb, yb_n, u, y)
            yb = yb_n
        else:
            dz = A @ z + D @ w
            if q:
                dz = dz + B @ u
            xb = xb + h * rhs_from_error(xb, y, u, S[k], cfg)
            z = z + h * dz
            x_n, delta_n, y_n = measure(z, t + h)
        if not (np.all(np.abs(z) < DIVERGENCE_LIMIT) and np.all(np.abs(xb) < DIVERGENCE_LIMIT)):
            raise DivergedError(f"state exceeded {DIVERGENCE_LIMIT:g} at t = {t + h:.6g} s")
        x, delta, y = x_n, delta_n, y_n

    delta_hat = None
    if sc.reconstruct:
        delta_hat = Xh[:, n].copy()
    Xo = Xh[:, :n]
    trace = Trace(times=times, x=X, xhat=Xo, eta=X - Xo, y=Y, sigma=S, u=U, delta=Dl,
                  delta_hat=delta_hat)
    trace.summary.update(summarize(trace, sc))
    return trace


def closed_loop_simulate(sc: Scenario) -> Trace:
    """Simulate with ``u = -(K xhat + h delta_hat)`` from a :class:`FeedbackSpec`."""
    if not isinstance(sc.control, FeedbackSpec):
        raise ValidationError("closed-loop simulation needs a FeedbackSpec control")
    return simulate(sc)


def augment_for_input_reconstruction(sys: LtiSystem, ddot_bound: float) -> LtiSystem:
    """Append the unknown input to the state; its derivative becomes the new input.

    Raises
    ------
    UnsupportedMultiInputError
        Unless the plant has exactly one unknown input.
    NotStronglyObservableError
        If the augmented plant is not strongly observable.
    """
    from .errors import NotStronglyObservableError

    if sys.m != 1:
        raise UnsupportedMultiInputError(
            f"augmentation is defined for one unknown input, plant has {sys.m}"
        )
    if sys.F is not None and np.any(sys.F):
        raise ValidationError("augmentation needs a plant without feedthrough")
    if not (ddot_bound > 0 and np.isfinite(ddot_bound)):
        raise ValidationError("derivative bound must be positive")
    n = sys.n
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = sys.A
    A[:n, n:] = sys.D
    B = np.vstack([sys.B, np.zeros((1, sys.q))])
    D = np.zeros((n + 1, 1))
    D[n, 0] = 1.0
    C = np.hstack([sys.C, np.zeros((sys.p, 1))])
    aug = LtiSystem(A=A, B=B, D=D, C=C, bounds=[ddot_bound])
    verdict = is_strongly_observable(aug)
    if not verdict:
        raise NotStronglyObservableError("augmented plant is not strongly observable", verdict.witness)
    return aug


@dataclass(frozen=True)
class EigenReport:
    eigenvalues: np.ndarray

    def contains(self, value: complex, tol: float = 1e-2) -> bool:
        return bool(np.min(np.abs(self.eigenvalues - value)) <= tol)

    @property
    def stable(self) -> bool:
        return bool(np.all(self.eigenvalues.real < 0))


def nominal_eigen_check(A, B, K) -> EigenReport:
    """Eigenvalues of ``A - B K``, sorted by real part."""
    A = np.asarray(A, dtype=float)
    M = A - np.asarray(B, dtype=float) @ np.asarray(K, dtype=float)
    ev = np.linalg.eigvals(M)
    return EigenReport(ev[np.lexsort((ev.imag, ev.real))])


def settling_time(times, err, tol, window: float = 1.0) -> float:
    """Earliest ``t`` after which ``|err| < tol`` holds for at least ``window`` seconds.

    ``err`` is a 1-D or 2-D (time by channel) array; ``tol`` broadcasts
    against it.  A 2-D ``err`` must satisfy the bound in every channel.
    Returns ``inf`` if the bound never holds on a full trailing window.
    """
    times = np.asarray(times, dtype=float)
    err = np.abs(np.asarray(err, dtype=float))
    ok = err < tol
    if ok.ndim > 1:
        ok = ok.all(axis=1)
    if not ok[-1]:
        return float("inf")
    bad = np.flatnonzero(~ok)
    start = 0 if bad.size == 0 else bad[-1] + 1
    if times[-1] - times[start] < window - 1e-12:
        return float("inf")
    return float(times[start])


def summarize(trace: Trace, sc: Scenario, tol: float = 1e-3) -> dict:
    """Settling times, final errors and gain margins."""
    scale = np.maximum(1.0, np.abs(trace.x))
    per_state = [settling_time(trace.times, trace.eta[:, i], tol * scale[:, i])
                 for i in range(trace.x.shape[1])]
    gc = check_gain_condition(sc.observer, sc.nf.Dbar, sc.observer_bounds)
    out = {
        "settling_time": settling_time(trace.times, trace.eta, tol * scale),
        "settling_time_per_state": per_state,
        "max_abs_eta_final": float(np.max(np.abs(trace.eta[-1]))),
        "gain_margins": gc.margins.tolist(),
        "gain_condition": gc.satisfied,
        "step": sc.step,
        "horizon": sc.horizon,
    }
    if trace.delta_hat is not None:
        d_err = trace.delta_hat - trace.delta[:, 0]
        out["delta_settling_time"] = settling_time(trace.times, d_err, tol)
        out["max_abs_delta_error_final"] = float(abs(d_err[-1]))
    return out
