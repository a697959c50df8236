"""Transformation into the observer normal form.

The normal form consists of ``p`` coupled chains of integrators of orders
``mu_1 >= ... >= mu_p``.  In transformed coordinates ``x = T xbar`` and
``ybar = Gamma y``:

* ``Cbar = Gamma C T`` selects the first state of every chain,
* ``Abar`` carries the coefficients ``alpha`` in the first column of every
  block, ones on the superdiagonal of every block and the coupling
  coefficients ``beta`` in the last row of later blocks,
* ``Dbar`` is nonzero only in the last row of every block.

The construction runs in four steps: :func:`step1_decompose` finds the output
transform and the chain lengths, :func:`step2_anchor_columns` the last column
of every block of ``T``, :func:`step3_beta` the coupling coefficients and
:func:`step4_build_T` the remaining columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonConvergenceError,
    NotStronglyObservableError,
    ParseError,
    SingularObservabilityError,
    StructuralValidationError,
)
from .linalg import (
    DEFAULT_TOL,
    SINGULAR_CONDITION,
    RankTolerance,
    min_norm_row_combination,
    normalize_rows,
    numerical_rank,
    solve_square,
)
from .model import (
    FeedthroughReduction,
    LtiSystem,
    eliminate_feedthrough,
    is_strongly_observable,
    parse_json,
)

#: Entries below this fraction of a matrix's largest entry are set to zero.
SNAP_RELATIVE = 1e-9
#: Condition ceiling for the coupling systems; their determinant is one by
#: construction, so only a breakdown far beyond the usual ceiling is reported.
BETA_CONDITION = 1.0 / np.finfo(float).eps
#: Default relative tolerance of :func:`validate_structure`.
STRUCTURE_TOL = 1e-8


def _offsets(mu) -> np.ndarray:
    """Start index of every block (0-based) followed by ``n``."""
    return np.concatenate([[0], np.cumsum(mu)]).astype(int)


@dataclass(frozen=True, eq=False)
class Step1Result:
    """Output of the decomposition step.

    ``permutation[k]`` is the original output index placed at sorted
    position ``k``; ``mu`` is sorted non-increasingly.  ``O_R`` stacks the
    chain rows in sorted order; it equals the reduced observability matrix
    with rows ``c_j A_check^k``.  ``S = O_R A_check O_R^-1`` is the auxiliary
    dynamics in chain coordinates: a shift inside every block, with computed
    entries only in the last row of each block.
    """

    Gamma: np.ndarray
    Xi: np.ndarray
    A_check: np.ndarray
    C_check: np.ndarray
    mu: tuple[int, ...]
    permutation: tuple[int, ...]
    Z: np.ndarray
    nu: tuple[int, ...]
    rounds: int
    O_R: np.ndarray
    S: np.ndarray

    @property
    def n(self) -> int:
        return self.A_check.shape[0]

    @property
    def p(self) -> int:
        return self.C_check.shape[0]


def _rank_grows(M: np.ndarray, row: np.ndarray, tol: RankTolerance) -> bool:
    """Whether appending ``row`` raises the rank of the row set ``M``."""
    stacked = normalize_rows(np.vstack([M, row]))
    return numerical_rank(stacked, tol) > numerical_rank(stacked[:-1], tol)


def _new_input_direction(W: np.ndarray, b: np.ndarray, scale: float, tol: RankTolerance) -> bool:
    """Whether ``b`` leaves the row space of ``W``.

    ``b`` is a product ``z D`` and may be pure rounding noise, so the part of
    ``b`` outside the row space is measured against ``scale``, the magnitude
    of the terms ``z`` was accumulated from, rather than against ``W``.
    """
    if not np.any(W):
        resid = b
    else:
        resid = b - (b @ np.linalg.pinv(W)) @ W
    return bool(np.linalg.norm(resid) > tol.relative * scale)


def step1_decompose(sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL) -> Step1Result:
    """Maximise the relative degrees of suitable output combinations.

    For every output ``j`` a chain of rows ``z_{j,1}, ..., z_{j,nu_j}`` and
    coefficient rows ``psi_{j,l}`` are built so that ``z_{j,1} = psi_{j,1} C``
    and ``z_{j,l+1} = z_{j,l} A + psi_{j,l+1} C``.  Flags are processed in
    ascending order within every sweep.  Whenever the unknown input appears
    in ``z_{j,nu_j} D`` and is linearly independent of the inputs already
    recorded in ``W``, the chain stops (case 1).  Otherwise the dependence is
    removed with the minimum-norm coefficients and the chain is extended if
    the new row ``z A`` is independent of all rows collected so far.

    The test for a new input direction uses, for every row, the magnitude of
    the terms it was accumulated from, so that a product ``z D`` that cancels
    down to rounding noise is recognised as zero.

    Raises
    ------
    NotStronglyObservableError
        If fewer than ``n`` independent rows are collected.
    NonConvergenceError
        If the iteration exceeds ``n * p`` sweeps.
    """
    A, C, D = sys.A, sys.C, sys.D
    n, p, m = sys.n, sys.p, sys.m
    Z = [[C[j].copy()] for j in range(p)]
    scales = [[np.linalg.norm(C[j])] for j in range(p)]
    Psi = [[np.eye(p)[j]] for j in range(p)]
    W = np.zeros((p, m))
    nu = [1] * p
    flags = [True] * p
    D_norm = np.linalg.norm(D, 2) if m else 0.0
    rounds = 0
    while any(flags):
        rounds += 1
        if rounds > n * p:
            raise NonConvergenceError(f"decomposition did not terminate within {n * p} sweeps")
        for j in range(p):
            if not flags[j]:
                continue
            z = Z[j][-1]
            if m:
                b = z @ D
                scale = scales[j][-1] * D_norm
                if _new_input_direction(W, b, scale, tol):
                    W[j] = b
                    flags[j] = False
                    continue
                zeta = min_norm_row_combination(W, b, tol.with_absolute(tol.relative * scale))
            else:
                zeta = np.zeros(p)
            if np.any(zeta):
                new_z, new_psi, new_s = [], [], []
                for l in range(nu[j]):
                    zl, pl, sl = Z[j][l].copy(), Psi[j][l].copy(), scales[j][l]
                    for k in np.flatnonzero(zeta):
                        idx = nu[k] - nu[j] + l
                        if idx >= 0:
                            zl -= zeta[k] * Z[k][idx]
                            pl -= zeta[k] * Psi[k][idx]
                            sl += abs(zeta[k]) * scales[k][idx]
                    new_z.append(zl)
                    new_psi.append(pl)
                    new_s.append(sl)
                Z[j], Psi[j], scales[j] = new_z, new_psi, new_s
            za = Z[j][-1] @ A
            sa = scales[j][-1] * np.linalg.norm(za) / max(np.linalg.norm(Z[j][-1]), np.finfo(float).tiny)
            collected = np.vstack([row for rows in Z for row in rows])
            if _rank_grows(collected, za, tol):
                Z[j].append(za)
                scales[j].append(sa)
                Psi[j].append(np.zeros(p))
                nu[j] += 1
            else:
                flags[j] = False
    Zmat = np.vstack([row for rows in Z for row in rows])
    rank = numerical_rank(normalize_rows(Zmat), tol)
    if sum(nu) < n or rank < n:
        raise NotStronglyObservableError(f"decomposition collected only rank {rank} of {n}")
    order = tuple(sorted(range(p), key=lambda j: -nu[j]))
    mu = tuple(nu[j] for j in order)
    Gamma = np.vstack([Psi[j][0] for j in order])
    rhs = np.vstack([np.vstack(Psi[j][1:] + [np.zeros(p)]) for j in range(p)])
    Xi = np.linalg.solve(Zmat, rhs)
    A_check = A + Xi @ C
    C_check = Gamma @ C
    O_R = np.vstack([np.vstack(Z[j]) for j in order])
    ends = _offsets(mu)[1:] - 1
    S = np.zeros((n, n))
    for r in range(n):
        if r not in ends:
            S[r, r + 1] = 1.0
    last = np.vstack([Z[j][-1] @ A for j in order])
    S[ends] = np.linalg.solve(O_R.T, last.T).T
    return Step1Result(
        Gamma=Gamma, Xi=Xi, A_check=A_check, C_check=C_check, mu=mu,
        permutation=order, Z=Zmat, nu=tuple(nu), rounds=rounds, O_R=O_R, S=S,
    )


def reduced_observability_matrix(s1: Step1Result) -> np.ndarray:
    """Rows ``c_j A_check^k`` for every sorted output ``j`` and ``k < mu_j``.

    These are the chain rows collected by :func:`step1_decompose`; using them
    directly avoids forming powers of ``A_check``.
    """
    return s1.O_R


def step2_anchor_columns(s1: Step1Result, max_condition: float = SINGULAR_CONDITION) -> np.ndarray:
    """Last column of every block of ``T``, stacked as an ``n x p`` array.

    Column ``j`` solves ``O_R t = e_{S_j}`` with ``S_j`` the index of the last
    state of block ``j``.

    Raises
    ------
    SingularObservabilityError
        If the reduced observability matrix is numerically singular.
    """
    O_R = s1.O_R
    cond = np.linalg.cond(O_R)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularObservabilityError(f"reduced observability matrix is singular (cond {cond:.3e})")
    return np.linalg.solve(O_R, _unit_anchors(s1.mu))


def _unit_anchors(mu) -> np.ndarray:
    """Anchors in chain coordinates, where ``O_R`` is the identity."""
    n = int(sum(mu))
    return np.eye(n)[:, _offsets(mu)[1:] - 1]


def _powers_times(A: np.ndarray, t: np.ndarray, count: int) -> list[np.ndarray]:
    out = [t]
    for _ in range(count - 1):
        out.append(A @ out[-1])
    return out


def _beta_systems_chain(S: np.ndarray, mu, anchors: np.ndarray) -> list[tuple[int, np.ndarray, np.ndarray]]:
    # in chain coordinates c_r is the unit row selecting the start of block r
    p = len(mu)
    starts = _offsets(mu)[:-1]
    pw = [_powers_times(S, anchors[:, s], mu[0] + 1) for s in range(p)]
    out = []
    for j in range(p - 1):
        later = range(j + 1, p)
        sizes = [mu[j] - mu[r] for r in later]
        N = sum(sizes)
        if N == 0:
            continue
        H = np.zeros((N, N))
        w = np.zeros(N)
        row0 = 0
        for r, nr in zip(later, sizes):
            for a in range(nr):
                w[row0 + a] = pw[j][mu[j] - 1 - a][starts[r]]
            col0 = 0
            for s, ns in zip(later, sizes):
                for a in range(nr):
                    for b in range(ns):
                        e = mu[s] + b - a - 1
                        if e < mu[r]:
                            H[row0 + a, col0 + b] = 1.0 if (r == s and e == mu[r] - 1) else 0.0
                        else:
                            H[row0 + a, col0 + b] = pw[s][e][starts[r]]
                col0 += ns
            row0 += nr
        out.append((j, H, w))
    return out


def beta_systems(s1: Step1Result, anchors: np.ndarray) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Linear systems ``H beta = w`` that define the coupling coefficients.

    Returns one ``(j, H, w)`` triple (0-based ``j``) for every block whose
    system is nonempty.  Unknowns are ordered by later block ``r`` and then
    by index ``l = mu_r, ..., mu_j - 1``.  Entries ``c_r A_check^e t_s`` are
    evaluated in chain coordinates.
    """
    return _beta_systems_chain(s1.S, s1.mu, s1.O_R @ anchors)


def _solve_beta(systems, mu) -> np.ndarray:
    p = len(mu)
    beta = np.zeros((p, p, mu[0] if p else 0))
    for j, H, w in systems:
        sol = solve_square(H, w, BETA_CONDITION)
        pos = 0
        for r in range(j + 1, p):
            for l in range(mu[r], mu[j]):
                beta[j, r, l] = sol[pos]
                pos += 1
    return beta


def step3_beta(s1: Step1Result, anchors: np.ndarray) -> np.ndarray:
    """Coupling coefficients as an array ``beta[j, r, l]``.

    Indices are 0-based for the blocks; ``l`` runs over ``0..mu_j - 1`` and
    ``beta[j, r, l]`` vanishes unless ``r > j`` and ``l >= mu_r``.

    Raises
    ------
    SingularMatrixError
        If one of the systems of :func:`beta_systems` is singular.
    """
    return _solve_beta(beta_systems(s1, anchors), s1.mu)


def _build_T_chain(S: np.ndarray, mu, anchors: np.ndarray, beta: np.ndarray) -> np.ndarray:
    p = len(mu)
    n = S.shape[0]
    ends = _offsets(mu)[1:]
    pw = [_powers_times(S, anchors[:, s], mu[0]) for s in range(p)]
    T = np.zeros((n, n))
    for j in range(p):
        for i in range(mu[j]):
            col = pw[j][i].copy()
            for r in range(j + 1, p):
                for q in range(1, i + 1):
                    coeff = beta[j, r, mu[j] - q]
                    if coeff:
                        col -= coeff * pw[r][i - q]
            T[:, ends[j] - 1 - i] = col
    return T


def step4_build_T(s1: Step1Result, anchors: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Assemble the state transformation from the anchors and ``beta``.

    Inside block ``j`` the column ``i`` places before the anchor is
    ``A^i t_j - sum_{r > j} sum_{q=1..i} beta[j, r, mu_j - q] A^(i-q) t_r``
    with ``A = A_check``.  The powers are formed in chain coordinates and
    mapped back with a single solve.
    """
    T_chain = _build_T_chain(s1.S, s1.mu, s1.O_R @ anchors, beta)
    return np.linalg.solve(s1.O_R, T_chain)


def _snap(M: np.ndarray, rel: float = SNAP_RELATIVE) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.size:
        M[np.abs(M) < rel * np.max(np.abs(M))] = 0.0
    return M


@dataclass(frozen=True, eq=False)
class NormalFormResult:
    """Outcome of :func:`transform`.

    With ``x = T xbar`` the observer works on ``ybar = output_map @ y``.  For
    plants without feedthrough ``output_map`` equals ``Gamma``; otherwise it
    also contains the feedthrough output transform, and ``known_injection``
    maps the measured output onto the extra known input of the reduced
    plant.
    """

    T: np.ndarray
    Gamma: np.ndarray
    Xi: np.ndarray
    mu: tuple[int, ...]
    beta: np.ndarray
    Abar: np.ndarray
    Bbar: np.ndarray
    Dbar: np.ndarray
    Cbar: np.ndarray
    alpha: np.ndarray
    permutation: tuple[int, ...] = ()
    output_map: np.ndarray | None = None
    known_injection: np.ndarray | None = None
    m_F: int = 0
    T_inv: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.output_map is None:
            object.__setattr__(self, "output_map", self.Gamma)
        if self.known_injection is None:
            object.__setattr__(self, "known_injection", np.zeros((self.n, self.output_map.shape[1])))
        if self.T_inv is None:
            object.__setattr__(self, "T_inv", np.linalg.inv(self.T))
        object.__setattr__(self, "mu", tuple(int(v) for v in self.mu))
        object.__setattr__(self, "permutation", tuple(int(v) for v in self.permutation))

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def p(self) -> int:
        return len(self.mu)

    @property
    def block_starts(self) -> np.ndarray:
        return _offsets(self.mu)[:-1]

    @property
    def block_ends(self) -> np.ndarray:
        """Index (0-based) of the last state of every block."""
        return _offsets(self.mu)[1:] - 1

    def beta_coefficient(self, j: int, k: int, l: int) -> float:
        """``beta_{j,k,l}`` with 1-based block indices ``j, k``."""
        if l >= self.beta.shape[2]:
            return 0.0
        return float(self.beta[j - 1, k - 1, l])

    _ARRAYS = ("T", "T_inv", "Gamma", "Xi", "beta", "Abar", "Bbar", "Dbar", "Cbar", "alpha",
               "output_map", "known_injection")

    def to_dict(self) -> dict:
        out = {name: np.asarray(getattr(self, name)).tolist() for name in self._ARRAYS}
        out["shapes"] = {name: list(np.shape(getattr(self, name))) for name in self._ARRAYS}
        out["mu"] = list(self.mu)
        out["permutation"] = list(self.permutation)
        out["m_F"] = self.m_F
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NormalFormResult":
        if not isinstance(data, dict):
            raise ParseError("normal-form description must be a JSON object")
        shapes = data.get("shapes", {})
        arrays = {}
        try:
            for name in cls._ARRAYS:
                if name not in data:
                    if name in ("T", "Gamma", "Abar", "Bbar", "Dbar", "Cbar"):
                        raise ParseError(f"normal-form description lacks {name}")
                    continue
                a = np.array(data[name], dtype=float)
                if name in shapes:
                    a = a.reshape(shapes[name])
                arrays[name] = a
            mu = tuple(int(v) for v in data["mu"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid normal-form data: {exc}") from exc
        arrays.setdefault("Xi", np.zeros((0, 0)))
        arrays.setdefault("beta", np.zeros((len(mu), len(mu), max(mu))))
        arrays.setdefault("alpha", arrays["Abar"][:, _offsets(mu)[:-1]])
        return cls(mu=mu, permutation=tuple(data.get("permutation", ())),
                   m_F=int(data.get("m_F", 0)), **arrays)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "NormalFormResult":
        return cls.from_dict(parse_json(text))


@dataclass(frozen=True)
class Violation:
    matrix: str
    row: int
    col: int
    magnitude: float


def validate_structure(r: NormalFormResult, tol: float = STRUCTURE_TOL) -> list[Violation]:
    """List every entry that breaks the normal-form pattern.

    Entries of ``Abar`` and ``Cbar`` are compared against ``tol`` times the
    2-norm of ``Abar``, entries of ``Dbar`` against ``tol`` times its own
    2-norm.  Superdiagonal entries inside
    a block must equal one.  An empty list means the pattern holds.
    """
    mu = r.mu
    n = r.n
    starts = r.block_starts
    ends = r.block_ends
    an = max(np.linalg.norm(r.Abar, 2), 1.0)
    out: list[Violation] = []

    expected = np.zeros((n, n))
    free = np.zeros((n, n), dtype=bool)
    free[:, starts] = True
    for j, (s, mj) in enumerate(zip(starts, mu)):
        for i in range(mj - 1):
            expected[s + i, s + i + 1] = 1.0
        for k in range(j + 1, len(mu)):
            free[ends[k], s + mu[k]: s + mj] = True
    dev = np.where(free, 0.0, np.abs(r.Abar - expected))
    for i, c in zip(*np.nonzero(dev > tol * an)):
        out.append(Violation("Abar", int(i), int(c), float(dev[i, c])))

    if r.Dbar.size:
        mask = np.ones(n, dtype=bool)
        mask[ends] = False
        dn = max(np.linalg.norm(r.Dbar, 2), 1.0)
        for i, c in zip(*np.nonzero(np.abs(r.Dbar[mask]) > tol * dn)):
            row = int(np.flatnonzero(mask)[i])
            out.append(Violation("Dbar", row, int(c), float(abs(r.Dbar[row, c]))))

    sel = np.zeros((len(mu), n))
    sel[np.arange(len(mu)), starts] = 1.0
    dev = np.abs(r.Cbar - sel)
    for i, c in zip(*np.nonzero(dev > tol * an)):
        out.append(Violation("Cbar", int(i), int(c), float(dev[i, c])))
    return out


def transform(sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL, check: bool = True) -> NormalFormResult:
    """Transform a strongly observable plant into the observer normal form.

    A plant with feedthrough is first reduced with
    :func:`~hosmo.model.eliminate_feedthrough`.

    Raises
    ------
    NotStronglyObservableError
        If the (reduced) plant is not strongly observable.
    StructuralValidationError
        If the transformed matrices do not exhibit the expected pattern.
    """
    red: FeedthroughReduction | None = None
    plant = sys
    if sys.F is not None:
        red = eliminate_feedthrough(sys, tol)
        plant = red.reduced
    if check:
        verdict = is_strongly_observable(plant, tol)
        if not verdict:
            raise NotStronglyObservableError(
                f"Rosenbrock matrix loses rank at s = {verdict.witness:.6g}", verdict.witness
            )
    s1 = step1_decompose(plant, tol)
    step2_anchor_columns(s1)  # raises SingularObservabilityError
    # chain coordinates: xi = O_R x, T = O_R^-1 T_chain
    O_R = s1.O_R
    unit = _unit_anchors(s1.mu)
    beta = _solve_beta(_beta_systems_chain(s1.S, s1.mu, unit), s1.mu)
    T_chain = _build_T_chain(s1.S, s1.mu, unit, beta)
    T = np.linalg.solve(O_R, T_chain)
    T_inv = np.linalg.solve(T_chain, O_R)
    A_chain = np.linalg.solve(O_R.T, (O_R @ plant.A).T).T
    Abar = _snap(np.linalg.solve(T_chain, A_chain @ T_chain))
    Bbar = np.linalg.solve(T_chain, O_R @ plant.B)
    Dbar = _snap(np.linalg.solve(T_chain, O_R @ plant.D))
    C_chain = np.linalg.solve(O_R.T, (s1.Gamma @ plant.C).T).T
    Cbar = _snap(C_chain @ T_chain)
    starts = _offsets(s1.mu)[:-1]
    output_map = s1.Gamma
    known = None
    m_F = 0
    if red is not None and red.m_F:
        m_F = red.m_F
        output_map = s1.Gamma @ red.output_map
        known = T_inv @ red.D0 @ red.known_output_map
    result = NormalFormResult(
        T=T, Gamma=s1.Gamma, Xi=s1.Xi, mu=s1.mu, beta=beta, Abar=Abar, Bbar=Bbar,
        Dbar=Dbar, Cbar=Cbar, alpha=Abar[:, starts].copy(), permutation=s1.permutation,
        output_map=output_map, known_injection=known, m_F=m_F, T_inv=T_inv,
    )
    violations = validate_structure(result)
    if violations:
        worst = max(v.magnitude for v in violations)
        raise StructuralValidationError(
            f"{len(violations)} entries violate the normal-form pattern (max {worst:.3e})", worst
        )
    return result
