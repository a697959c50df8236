"""Robust observer for a plant in observer normal form.

The observer copies the normal-form dynamics and adds a linear output
injection ``Pi`` (the ``alpha`` columns of ``Abar``) and a nonlinear
injection of robust-exact-differentiator type per subsystem.  With
``Pi`` in place each subsystem's error dynamics is a pure integrator
chain driven by the unknown input through its last state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedOrderError, ValidationError
from .normalform import NormalFormResult, _offsets

DISCONTINUOUS = "discontinuous"
CONTINUOUS = "continuous"
INJECTION_KINDS = (DISCONTINUOUS, CONTINUOUS)

#: Base table of the default gain cascade, lowest order first.
LAMBDA_TABLE = (1.1, 1.5, 2.0, 3.0, 5.0, 8.0)

#: Replacement for a zero disturbance bound in :func:`default_gains`.
L_FLOOR = 1e-6


def signed_power(x, gamma):
    """``|x|**gamma * sign(x)`` with ``sign(0) = 0``."""
    x = np.asarray(x, dtype=float)
    return np.abs(x) ** gamma * np.sign(x)


def build_linear_injection(Abar, mu) -> np.ndarray:
    """Linear injection: column ``j`` is the first column of block ``j`` of ``Abar``."""
    Abar = np.asarray(Abar, dtype=float)
    return Abar[:, _offsets(mu)[:-1]].copy()


def default_gains(mu_j: int, L_eff: float, floor: float = L_FLOOR) -> np.ndarray:
    """Default gains ``kappa_0 .. kappa_{mu_j-1}`` for one subsystem.

    The recursive-form parameters ``lambda`` of :data:`LAMBDA_TABLE` are
    converted to the non-recursive form by ``k_{mu-1} = lambda_{mu-1}``,
    ``k_i = lambda_i k_{i+1}^{i/(i+1)}`` and scaled by
    ``kappa_i = k_i L^{(mu-i)/mu}``.  In particular ``kappa_0 = 1.1 L``.

    Parameters
    ----------
    mu_j : int
        Subsystem order, 1 to 6.
    L_eff : float
        Bound of the disturbance acting on the last state of the chain.
        Zero is replaced by ``floor``.

    Raises
    ------
    UnsupportedOrderError
        If ``mu_j > 6``.
    """
    mu_j = int(mu_j)
    if mu_j < 1:
        raise ValidationError("subsystem order must be at least 1")
    if mu_j > len(LAMBDA_TABLE):
        raise UnsupportedOrderError(
            f"no default gains for order {mu_j} > {len(LAMBDA_TABLE)}; supply gains explicitly"
        )
    if L_eff < 0 or not np.isfinite(L_eff):
        raise ValidationError("L_eff must be finite and non-negative")
    L = L_eff if L_eff > 0 else floor
    lam = LAMBDA_TABLE[:mu_j]
    k = np.empty(mu_j)
    k[-1] = lam[-1]
    for i in range(mu_j - 2, -1, -1):
        k[i] = lam[i] * k[i + 1] ** (i / (i + 1))
    return np.array([k[i] * L ** ((mu_j - i) / mu_j) for i in range(mu_j)])


def disturbance_levels(Dbar, mu, bounds) -> np.ndarray:
    """``sum_i L_i |dbar_{end_j, i}|`` for every subsystem ``j``."""
    Dbar = np.asarray(Dbar, dtype=float)
    ends = _offsets(mu)[1:] - 1
    if Dbar.shape[1] == 0:
        return np.zeros(len(mu))
    return np.abs(Dbar[ends]) @ np.asarray(bounds, dtype=float)


def _exponents(mu_j: int, kind: str, q: float) -> np.ndarray:
    """Injection exponents of one block, top state first."""
    k = np.arange(mu_j)
    if kind == DISCONTINUOUS:
        return (mu_j - 1 - k) / mu_j
    r = lambda i: 1.0 - (mu_j - i) * q  # noqa: E731
    return np.array([r(i + 2) / r(1) for i in k])


@dataclass(frozen=True, eq=False)
class ObserverConfig:
    """Immutable observer description in normal-form coordinates.

    ``gains[j][k]`` is ``kappa_{j,k}`` (0-based ``j``); ``kinds[j]`` selects
    the discontinuous or the continuous injection of subsystem ``j``.
    ``bounds`` are the unknown-input bounds used by the gain condition.
    """

    Abar: np.ndarray
    Bbar: np.ndarray
    Cbar: np.ndarray
    mu: tuple[int, ...]
    Pi: np.ndarray
    gains: tuple[np.ndarray, ...]
    kinds: tuple[str, ...]
    q: float = -0.5
    Dbar: np.ndarray | None = None
    output_map: np.ndarray | None = None
    known_injection: np.ndarray | None = None
    bounds: np.ndarray | None = None
    _gain: np.ndarray = field(init=False, repr=False)
    _exp: np.ndarray = field(init=False, repr=False)
    _block: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = tuple(int(v) for v in self.mu)
        object.__setattr__(self, "mu", mu)
        n, p = sum(mu), len(mu)
        for name in ("Abar", "Bbar", "Cbar", "Pi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.Abar.shape != (n, n) or self.Cbar.shape != (p, n) or self.Pi.shape != (n, p):
            raise ValidationError("observer matrices do not match the partition")
        if self.Bbar.shape[0] != n:
            raise ValidationError("Bbar must have n rows")
        if self.output_map is None:
            object.__setattr__(self, "output_map", np.eye(p))
        if self.known_injection is None:
            object.__setattr__(self, "known_injection", np.zeros((n, self.output_map.shape[1])))
        if self.Dbar is None:
            object.__setattr__(self, "Dbar", np.zeros((n, 0)))
        m = self.Dbar.shape[1]
        bounds = np.ones(m) if self.bounds is None else np.asarray(self.bounds, dtype=float).reshape(-1)
        if bounds.shape != (m,):
            raise ValidationError("one bound per unknown input required")
        object.__setattr__(self, "bounds", bounds)
        gains = tuple(np.asarray(g, dtype=float).reshape(-1) for g in self.gains)
        kinds = tuple(self.kinds)
        if len(gains) != p or len(kinds) != p:
            raise ValidationError("one gain vector and one injection kind per subsystem required")
        if not -1.0 < self.q < 0.0:
            raise ValidationError("homogeneity degree q must lie in (-1, 0)")
        starts = _offsets(mu)
        for j, (g, kind, mj) in enumerate(zip(gains, kinds, mu)):
            if g.shape != (mj,):
                raise ValidationError(f"subsystem {j + 1} needs {mj} gains, got {g.size}")
            if not np.all(g > 0) or not np.all(np.isfinite(g)):
                raise ValidationError(f"gains of subsystem {j + 1} must be positive")
            if kind not in INJECTION_KINDS:
                raise ValidationError(f"unknown injection kind {kind!r}")
            if kind == CONTINUOUS and np.any(self.Dbar[starts[j]: starts[j + 1]]):
                raise ValidationError(
                    f"continuous injection needs a disturbance-free subsystem; {j + 1} is not"
                )
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "kinds", kinds)
        # per-state gain, exponent and output index; top state uses kappa_{mu-1}
        object.__setattr__(self, "_gain", np.concatenate([g[::-1] for g in gains]))
        object.__setattr__(
            self, "_exp", np.concatenate([_exponents(mj, kd, self.q) for mj, kd in zip(mu, kinds)])
        )
        object.__setattr__(self, "_block", np.repeat(np.arange(p), mu))

    @property
    def n(self) -> int:
        return self.Abar.shape[0]

    @property
    def p(self) -> int:
        return len(self.mu)

    def gain(self, j: int, k: int) -> float:
        """``kappa_{j,k}`` with 1-based subsystem index ``j``."""
        return float(self.gains[j - 1][k])

    def with_gain(self, j: int, k: int, value: float) -> "ObserverConfig":
        """Copy with ``kappa_{j,k}`` (1-based ``j``) replaced."""
        gains = [g.copy() for g in self.gains]
        gains[j - 1][k] = value
        return _replace(self, gains=tuple(gains))

    def to_dict(self) -> dict:
        return {
            "gains": [g.tolist() for g in self.gains],
            "injection": list(self.kinds),
            "q": self.q,
        }


def _replace(cfg: ObserverConfig, **changes) -> ObserverConfig:
    kw = {k: getattr(cfg, k) for k in (
        "Abar", "Bbar", "Cbar", "mu", "Pi", "gains", "kinds", "q", "Dbar", "output_map",
        "known_injection", "bounds")}
    kw.update(changes)
    return ObserverConfig(**kw)


def synthesize(
    nf: NormalFormResult,
    bounds=None,
    gains=None,
    injection=DISCONTINUOUS,
    q: float = -0.5,
) -> ObserverConfig:
    """Observer for a transformed plant.

    Parameters
    ----------
    nf : NormalFormResult
    bounds : (m,) array_like, optional
        Bounds ``L_i`` of the unknown inputs, used for default gains.
        Defaults to ones.
    gains : sequence of array_like, optional
        ``gains[j][k] = kappa_{j,k}``.  ``None`` entries, or a ``None``
        subsystem, take the values of :func:`default_gains`.
    injection : str or sequence of str
        Injection kind for all subsystems or per subsystem.
    q : float
        Homogeneity degree of the continuous injection.
    """
    p = nf.p
    m = nf.Dbar.shape[1]
    bounds = np.ones(m) if bounds is None else np.asarray(bounds, dtype=float)
    levels = disturbance_levels(nf.Dbar, nf.mu, bounds)
    given = list(gains) if gains is not None else [None] * p
    if len(given) != p:
        raise ValidationError(f"expected gains for {p} subsystems, got {len(given)}")
    full = []
    for j, (g, mj) in enumerate(zip(given, nf.mu)):
        d = default_gains(mj, levels[j])
        if g is None:
            full.append(d)
            continue
        g = list(np.atleast_1d(np.asarray(g, dtype=object)))
        if len(g) != mj:
            raise ValidationError(f"subsystem {j + 1} needs {mj} gains, got {len(g)}")
        full.append(np.array([d[k] if v is None else float(v) for k, v in enumerate(g)]))
    full = tuple(full)
    kinds = (injection,) * p if isinstance(injection, str) else tuple(injection)
    return ObserverConfig(
        Abar=nf.Abar, Bbar=nf.Bbar, Cbar=nf.Cbar, mu=nf.mu,
        Pi=build_linear_injection(nf.Abar, nf.mu), gains=full, kinds=kinds, q=q,
        Dbar=nf.Dbar, output_map=nf.output_map, known_injection=nf.known_injection,
        bounds=bounds,
    )


def nonlinear_injection(sigma_y, cfg: ObserverConfig) -> np.ndarray:
    """Signed-power injection of every subsystem's output error.

    Block ``j`` is ``(kappa_{j,mu_j-1} [s]^{e_1}, ..., kappa_{j,0} [s]^{e_mu})``
    with ``s = sigma_y[j]``.
    """
    s = np.asarray(sigma_y, dtype=float)[cfg._block]
    return cfg._gain * signed_power(s, cfg._exp)


@dataclass(frozen=True)
class GainCheck:
    """Outcome of :func:`check_gain_condition`; truthy when satisfied."""

    satisfied: bool
    margins: np.ndarray

    def __bool__(self) -> bool:
        return self.satisfied


def check_gain_condition(cfg: ObserverConfig, Dbar=None, bounds=None) -> GainCheck:
    """Necessary gain condition ``kappa_{j,0} > sum_i L_i |dbar_{end_j,i}|``.

    Margins are the left side minus the right side, one per subsystem.
    ``Dbar`` and ``bounds`` default to those stored in ``cfg``.
    """
    if Dbar is None:
        Dbar = cfg.Dbar
        bounds = cfg.bounds if bounds is None else bounds
    Dbar = np.asarray(Dbar, dtype=float)
    if Dbar.shape[0] != cfg.n:
        raise ValidationError("Dbar must have n rows")
    bounds = np.ones(Dbar.shape[1]) if bounds is None else np.asarray(bounds, dtype=float)
    if bounds.shape != (Dbar.shape[1],):
        raise ValidationError("one bound per unknown input required")
    margins = np.array([g[0] for g in cfg.gains]) - disturbance_levels(Dbar, cfg.mu, bounds)
    return GainCheck(bool(np.all(margins > 0)), margins)


def output_error(xhat, y, cfg: ObserverConfig) -> np.ndarray:
    """``sigma = output_map y - Cbar xhat``."""
    return cfg.output_map @ np.asarray(y, dtype=float) - cfg.Cbar @ np.asarray(xhat, dtype=float)


def observer_rhs(xhat, y, u, cfg: ObserverConfig) -> np.ndarray:
    """Observer derivative in normal-form coordinates.

    ``Abar xhat + Bbar u + Pi sigma + l(sigma)`` plus the known-output
    injection of plants with feedthrough.
    """
    xhat = np.asarray(xhat, dtype=float)
    y = np.asarray(y, dtype=float)
    return rhs_from_error(xhat, y, u, cfg.output_map @ y - cfg.Cbar @ xhat, cfg)


def rhs_from_error(xhat, y, u, sigma, cfg: ObserverConfig) -> np.ndarray:
    """:func:`observer_rhs` for an already computed output error."""
    out = cfg.Abar @ xhat + cfg.Pi @ sigma + nonlinear_injection(sigma, cfg)
    if cfg.Bbar.shape[1]:
        out = out + cfg.Bbar @ np.asarray(u, dtype=float)
    if np.any(cfg.known_injection):
        out = out + cfg.known_injection @ y
    return out


def chain_shift(mu) -> np.ndarray:
    """Block-diagonal upper shift ``J`` of the integrator chains."""
    n = sum(mu)
    J = np.zeros((n, n))
    for s, mj in zip(_offsets(mu)[:-1], mu):
        for i in range(mj - 1):
            J[s + i, s + i + 1] = 1.0
    return J


class ImplicitStep:
    """Semi-implicit Euler step of the observer.

    The chain shift ``J`` and the nonlinear injection are taken at the new
    time, everything else at the old one.  Per subsystem this leaves the
    scalar inclusion

        sigma + sum_i h^i kappa_i [sigma]^{e_i}  in  rho,

    whose set-valued part (zero exponents) is resolved exactly: the step
    lands on ``sigma = 0`` whenever ``|rho|`` is within the reach of the
    sign terms.  This removes the chattering of the explicit scheme.
    """

    def __init__(self, cfg: ObserverConfig, step: float):
        self.cfg = cfg
        self.h = float(step)
        J = chain_shift(cfg.mu)
        self.N = cfg.Abar - cfg.Pi @ cfg.Cbar - J
        self.P = np.linalg.inv(np.eye(cfg.n) - self.h * J)
        self.blocks = []
        for j, (s, mj) in enumerate(zip(_offsets(cfg.mu)[:-1], cfg.mu)):
            sl = slice(s, s + mj)
            w = self.h ** np.arange(1, mj + 1) * cfg._gain[sl]
            e = cfg._exp[sl]
            zero = e == 0
            self.blocks.append((
                j, sl, w, e, zero, float(w[zero].sum()), self.h ** np.arange(mj),
                [(float(wi), float(ei)) for wi, ei in zip(w, e) if ei > 0],
            ))

    def explicit_part(self, xhat, ybar, u, y, extra=None) -> np.ndarray:
        """``xhat + h (N xhat + Pi ybar + Bbar u + known y [+ extra])``."""
        cfg = self.cfg
        rate = self.N @ xhat + cfg.Pi @ ybar
        if cfg.Bbar.shape[1]:
            rate = rate + cfg.Bbar @ u
        if np.any(cfg.known_injection):
            rate = rate + cfg.known_injection @ y
        if extra is not None:
            rate = rate + extra
        return xhat + self.h * rate

    def chain_solve(self, c) -> np.ndarray:
        """``(I - h J)^{-1} c``."""
        return self.P @ c

    def __call__(self, xhat, ybar, ybar_next, u, y) -> np.ndarray:
        cfg, h = self.cfg, self.h
        c = self.explicit_part(xhat, ybar, u, y)
        rho = ybar_next - cfg.Cbar @ self.chain_solve(c)
        inj = np.zeros_like(c)
        for j, sl, w, e, zero, c0, hp, pos in self.blocks:
            phi = _resolve(float(rho[j]), e, zero, c0, pos)
            inj[sl] = w * phi / hp  # h * kappa_i * phi_i
        return self.chain_solve(c + inj)


def _resolve(rho: float, e: np.ndarray, zero: np.ndarray, c0: float, pos) -> np.ndarray:
    """Injection values ``[sigma]^{e_i}`` at the solution of the scalar inclusion."""
    from scipy.optimize import brentq

    a_rho = abs(rho)
    if a_rho <= c0:
        phi = np.zeros(e.shape)
        if c0 > 0:
            phi[zero] = rho / c0
        return phi
    target = a_rho - c0

    def f(a):
        return a + sum(wi * a ** ei for wi, ei in pos) - target

    a = brentq(f, 0.0, target, xtol=1e-300, rtol=4 * np.finfo(float).eps) if pos else target
    sgn = 1.0 if rho > 0 else -1.0
    return sgn * np.where(zero, 1.0, a ** e)
