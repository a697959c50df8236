"""LTI systems with unknown inputs and their structural checks.

The plant is

    x' = A x + B u + D delta,      y = C x + F delta,

with known input ``u``, unknown input ``delta`` bounded componentwise by
``bounds`` and an optional feedthrough ``F``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDimensionsError, DimensionError, ParseError, ValidationError
from .linalg import DEFAULT_TOL, RankTolerance, as_matrix, numerical_rank

#: Number of random complex probe points used by :func:`is_strongly_observable`.
N_RANDOM_PROBES = 50
_PROBE_SEED = 20200527


def _matrix(value, rows: int | None, name: str) -> np.ndarray:
    if value is None:
        if rows is None:
            raise DimensionError(f"{name} is required")
        return np.zeros((rows, 0))
    M = np.asarray(value, dtype=float)
    if M.size == 0:
        return np.zeros((rows if rows is not None else 0, 0))
    if M.ndim == 1:
        M = M.reshape(-1, 1) if rows is not None and M.shape[0] == rows else M.reshape(1, -1)
    return as_matrix(M, name)


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Immutable continuous-time plant description.

    ``B`` and ``D`` may have zero columns (no known input, no unknown input).
    ``bounds`` defaults to ones when omitted.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    C: np.ndarray
    F: np.ndarray | None = None
    bounds: np.ndarray = field(default=None)

    def __post_init__(self):
        A = as_matrix(np.asarray(self.A, dtype=float), "A")
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise DimensionError(f"A must be square and non-empty, got {A.shape}")
        B = _matrix(self.B, n, "B")
        D = _matrix(self.D, n, "D")
        C = _matrix(self.C, None, "C")
        if C.ndim != 2 or C.shape[1] != n or C.shape[0] < 1:
            raise DimensionError(f"C must be p x {n} with p >= 1, got {C.shape}")
        for name, M in (("B", B), ("D", D)):
            if M.shape[0] != n:
                raise DimensionError(f"{name} must have {n} rows, got {M.shape}")
        m = D.shape[1]
        p = C.shape[0]
        F = self.F
        if F is not None:
            F = np.asarray(F, dtype=float).reshape(p, m) if np.size(F) == p * m else None
            if F is None:
                raise DimensionError(f"F must be {p} x {m}")
            F = as_matrix(F, "F") if m else np.zeros((p, 0))
        bounds = np.ones(m) if self.bounds is None else np.asarray(self.bounds, dtype=float).reshape(-1)
        if bounds.shape != (m,):
            raise DimensionError(f"bounds must have length {m}, got {bounds.shape}")
        if np.any(bounds <= 0) or not np.all(np.isfinite(bounds)):
            raise ValidationError("every unknown-input bound must be positive and finite")
        if numerical_rank(C) != p:
            raise ValidationError("rows of C must be linearly independent")
        if m and numerical_rank(D) != m:
            raise ValidationError("columns of D must be linearly independent")
        for name, value in (("A", A), ("B", B), ("D", D), ("C", C), ("F", F), ("bounds", bounds)):
            if value is not None:
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def q(self) -> int:
        return self.B.shape[1]

    @property
    def has_feedthrough(self) -> bool:
        return self.F is not None and bool(np.any(self.F))

    def replace(self, **changes) -> "LtiSystem":
        fields = dict(A=self.A, B=self.B, D=self.D, C=self.C, F=self.F, bounds=self.bounds)
        fields.update(changes)
        return LtiSystem(**fields)

    def to_dict(self) -> dict:
        out = {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "D": self.D.tolist(),
            "C": self.C.tolist(),
            "bounds": self.bounds.tolist(),
        }
        if self.F is not None:
            out["F"] = self.F.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LtiSystem":
        if not isinstance(data, dict):
            raise ParseError("system description must be a JSON object")
        missing = [k for k in ("A", "C") if k not in data]
        if missing:
            raise ParseError(f"system description lacks {', '.join(missing)}")
        try:
            n = len(data["A"])
            return cls(
                A=np.array(data["A"], dtype=float),
                B=np.array(data["B"], dtype=float) if data.get("B") else np.zeros((n, 0)),
                D=np.array(data["D"], dtype=float) if data.get("D") else np.zeros((n, 0)),
                C=np.array(data["C"], dtype=float),
                F=np.array(data["F"], dtype=float) if data.get("F") is not None else None,
                bounds=data.get("bounds"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ParseError(f"invalid matrix data: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "LtiSystem":
        return cls.from_dict(parse_json(text))


def parse_json(text: str):
    """``json.loads`` raising :class:`ParseError` with line and column."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def rosenbrock(sys: LtiSystem, s: complex) -> np.ndarray:
    """Rosenbrock system matrix ``[[sI - A, -D], [C, F]]`` evaluated at ``s``."""
    n, m, p = sys.n, sys.m, sys.p
    F = sys.F if sys.F is not None else np.zeros((p, m))
    P = np.empty((n + p, n + m), dtype=complex)
    P[:n, :n] = s * np.eye(n) - sys.A
    P[:n, n:] = -sys.D
    P[n:, :n] = sys.C
    P[n:, n:] = F
    return P


def _null_space(M: np.ndarray, tol: RankTolerance) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, s, Vt = np.linalg.svd(M)
    r = int(np.count_nonzero(s > tol.threshold(s[0]))) if s.size else 0
    return Vt[r:].conj().T


def _orth(M: np.ndarray, tol: RankTolerance) -> np.ndarray:
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.count_nonzero(s > tol.threshold(max(s[0], 1.0))))
    return U[:, :r]


def weakly_unobservable_subspace(sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the largest subspace kept output-nulling by some input.

    Computed with the recursion ``V_{k+1} = {x : A x + D d in V_k,
    C x + F d = 0 for some d}`` starting from the whole state space.  The
    plant is strongly observable exactly when this subspace is trivial.
    """
    n, m, p = sys.n, sys.m, sys.p
    F = sys.F if sys.F is not None else np.zeros((p, m))
    AD = np.hstack([sys.A, sys.D])
    CF = np.hstack([sys.C, F])
    scale = max(np.linalg.norm(AD, 2), np.linalg.norm(CF, 2))
    t = tol.with_absolute(tol.relative * scale)
    V = np.eye(n)
    for _ in range(n + 1):
        Q = _null_space(V.T, t) if V.shape[1] else np.eye(n)
        N = np.vstack([CF, Q.T @ AD])
        K = _null_space(N, t)
        V_next = _orth(K[:n], tol)
        if V_next.shape[1] == V.shape[1]:
            return V_next
        V = V_next
        if V.shape[1] == 0:
            break
    return V


def _zeros_on(sys: LtiSystem, V: np.ndarray) -> np.ndarray:
    """Eigenvalues of the state map restricted to the output-nulling subspace."""
    n, m, p = sys.n, sys.m, sys.p
    k = V.shape[1]
    F = sys.F if sys.F is not None else np.zeros((p, m))
    # A V + D G = V R,  C V + F G = 0
    lhs = np.block([[sys.D, -V], [F, np.zeros((p, k))]])
    rhs = -np.vstack([sys.A @ V, sys.C @ V])
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return np.linalg.eigvals(sol[m:])


@dataclass(frozen=True)
class StrongObservability:
    """Verdict of :func:`is_strongly_observable`; truthy when observable."""

    observable: bool
    witness: complex | None = None
    points_checked: int = 0

    def __bool__(self) -> bool:
        return self.observable


def _rank_gap(P: np.ndarray) -> float:
    s = np.linalg.svd(P, compute_uv=False)
    return s[-1] / s[0] if s[0] > 0 else 0.0


def is_strongly_observable(sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL) -> StrongObservability:
    """Decide whether the Rosenbrock matrix has rank ``n + m`` for every ``s``.

    The rank can only drop at invariant zeros.  These are found as the
    eigenvalues of the state map on the weakly unobservable subspace, which
    avoids the spurious huge eigenvalues a direct generalized eigenvalue
    solve produces near infinite zeros.  The rank is then evaluated at every
    zero, at the eigenvalues of ``A`` and at a fixed set of random complex
    probes.  On failure the point with the smallest relative singular value
    is returned as witness.

    Raises
    ------
    DegenerateDimensionsError
        If ``m > p``; the rank can then never reach ``n + m``.
    """
    n, m, p = sys.n, sys.m, sys.p
    if m > p:
        raise DegenerateDimensionsError(f"m = {m} unknown inputs exceed p = {p} outputs")
    rng = np.random.default_rng(_PROBE_SEED)
    scale = max(1.0, np.max(np.abs(np.linalg.eigvals(sys.A))))
    probes = scale * (rng.standard_normal(N_RANDOM_PROBES) + 1j * rng.standard_normal(N_RANDOM_PROBES))
    V = weakly_unobservable_subspace(sys, tol)
    zeros = _zeros_on(sys, V) if V.shape[1] else np.zeros(0)
    candidates = np.concatenate([zeros, np.linalg.eigvals(sys.A), probes])
    gaps = []
    for s in candidates:
        P = rosenbrock(sys, complex(s))
        if numerical_rank(P, tol) < n + m:
            return StrongObservability(False, complex(s), len(candidates))
        gaps.append(_rank_gap(P))
    if V.shape[1]:
        return StrongObservability(False, complex(candidates[int(np.argmin(gaps))]), len(candidates))
    return StrongObservability(True, None, len(candidates))


def check_observer_matching(sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL) -> bool:
    """Whether ``rank(C D) == rank(D)``."""
    if sys.m == 0:
        return True
    CD = sys.C @ sys.D
    tol_cd = tol.with_absolute(tol.relative * np.linalg.norm(sys.C, 2) * np.linalg.norm(sys.D, 2))
    return numerical_rank(CD, tol_cd) == numerical_rank(sys.D, tol)


@dataclass(frozen=True, eq=False)
class FeedthroughReduction:
    """Result of removing the direct feedthrough from a plant.

    With ``y_t = U y`` split into ``y0`` (first ``m_F`` rows) and ``y1`` and
    ``delta = V delta_t`` split likewise, the reduced plant is

        x' = (A - D0 C0) x + B u + D1 delta_t1 + D0 y0,    y1 = C1 x.
    """

    reduced: LtiSystem
    U: np.ndarray
    V: np.ndarray
    m_F: int
    D0: np.ndarray
    C0: np.ndarray

    @property
    def output_map(self) -> np.ndarray:
        """Rows of ``U`` producing the reduced output ``y1``."""
        return self.U[self.m_F:]

    @property
    def known_output_map(self) -> np.ndarray:
        """Rows of ``U`` producing the known signal ``y0``."""
        return self.U[: self.m_F]


def eliminate_feedthrough(sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL) -> FeedthroughReduction:
    """Rewrite a plant with feedthrough as a feedthrough-free plant.

    ``U`` and ``V`` come from the SVD of ``F`` with the singular values
    folded into ``U``, so that ``U F V = [[I, 0], [0, 0]]``.

    Raises
    ------
    ValidationError
        If every output is consumed by the feedthrough (``m_F == p``).
    """
    n, m, p = sys.n, sys.m, sys.p
    F = sys.F if sys.F is not None else np.zeros((p, m))
    m_F = numerical_rank(F, tol) if F.size else 0
    if m_F == 0:
        return FeedthroughReduction(
            reduced=sys.replace(F=None), U=np.eye(p), V=np.eye(m), m_F=0,
            D0=np.zeros((n, 0)), C0=np.zeros((0, n)),
        )
    if m_F == p:
        raise ValidationError("feedthrough has full row rank; no feedthrough-free outputs remain")
    Us, s, Vt = np.linalg.svd(F)
    scale = np.ones(p)
    scale[:m_F] = 1.0 / s[:m_F]
    U = scale[:, None] * Us.T
    V = Vt.T
    D_t = sys.D @ V
    C_t = U @ sys.C
    D0, D1 = D_t[:, :m_F], D_t[:, m_F:]
    C0, C1 = C_t[:m_F], C_t[m_F:]
    # bound on each transformed input: V^-1 = V^T for orthogonal V
    t_bounds = np.abs(V.T) @ sys.bounds
    reduced = LtiSystem(
        A=sys.A - D0 @ C0, B=sys.B, D=D1, C=C1, F=None, bounds=t_bounds[m_F:],
    )
    return FeedthroughReduction(reduced=reduced, U=U, V=V, m_F=m_F, D0=D0, C0=C0)
