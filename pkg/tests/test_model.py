import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_strongly_observable, well_conditioned
from hosmo.errors import DegenerateDimensionsError, DimensionError, ParseError, ValidationError
from hosmo.linalg import numerical_rank
from hosmo.model import (
    LtiSystem,
    check_observer_matching,
    eliminate_feedthrough,
    is_strongly_observable,
    rosenbrock,
    weakly_unobservable_subspace,
)


def scalar(F=None):
    return LtiSystem(A=[[0.0]], B=np.zeros((1, 0)), D=[[1.0]], C=[[1.0]], F=F)


def test_rosenbrock_scalar():
    P = rosenbrock(scalar(), 2.0)
    np.testing.assert_array_equal(P, [[2, -1], [1, 0]])


def test_rosenbrock_aircraft_rank_at_zero(plant):
    assert numerical_rank(rosenbrock(plant, 0.0)) == 8


def test_rosenbrock_zero_a_block():
    P = rosenbrock(LtiSystem(A=np.zeros((2, 2)), B=None, D=[[1.0], [0.0]], C=np.eye(2)), 0.0)
    np.testing.assert_array_equal(P[:2, :2], 0)


def test_rosenbrock_includes_feedthrough():
    P = rosenbrock(scalar(F=[[3.0]]), 1.0)
    assert P[1, 1] == 3.0


def test_aircraft_strongly_observable(plant):
    verdict = is_strongly_observable(plant)
    assert verdict and verdict.witness is None


def test_unobservable_pair_not_strongly_observable():
    sys = LtiSystem(A=[[0.0, 1.0], [0.0, 0.0]], B=None, D=None, C=[[0.0, 1.0]])
    verdict = is_strongly_observable(sys)
    assert not verdict
    assert verdict.witness is not None
    assert numerical_rank(rosenbrock(sys, verdict.witness)) < sys.n + sys.m


def test_invariant_zero_witness():
    # transfer function (s + 3) / ((s + 1)(s + 2)): invariant zero at -3
    sys = LtiSystem(A=[[0.0, 1.0], [-2.0, -3.0]], B=None, D=[[0.0], [1.0]], C=[[3.0, 1.0]])
    verdict = is_strongly_observable(sys)
    assert not verdict
    assert abs(verdict.witness - (-3.0)) < 1e-8
    assert weakly_unobservable_subspace(sys).shape[1] == 1


def test_more_unknown_inputs_than_outputs():
    sys = LtiSystem(A=np.eye(2), B=None, D=np.eye(2), C=[[1.0, 0.0]])
    with pytest.raises(DegenerateDimensionsError):
        is_strongly_observable(sys)


def test_random_normal_form_system_strongly_observable(rng):
    for _ in range(10):
        sys, _ = random_strongly_observable(rng, 6, 2, 2)
        assert is_strongly_observable(sys)


def test_matching_condition_aircraft_fails(plant):
    assert is_strongly_observable(plant) and not check_observer_matching(plant)


def test_matching_condition_scalar_holds():
    assert check_observer_matching(scalar())


def test_matching_condition_null_space_input(rng):
    C = rng.standard_normal((2, 4))
    D = np.linalg.svd(C)[2][2:].T
    sys = LtiSystem(A=rng.standard_normal((4, 4)), B=None, D=D, C=C)
    assert not check_observer_matching(sys)


def test_no_unknown_input_reduces_to_observability():
    A = [[0.0, 1.0], [0.0, 0.0]]
    assert is_strongly_observable(LtiSystem(A=A, B=None, D=None, C=[[1.0, 0.0]]))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), observable=st.booleans())
def test_strong_observability_invariant_under_transforms(seed, observable):
    r = np.random.default_rng(seed)
    if observable:
        sys, _ = random_strongly_observable(r, 5, 2, 1)
    else:
        sys = LtiSystem(A=[[0.0, 1.0], [-2.0, -3.0]], B=None, D=[[0.0], [1.0]], C=[[3.0, 1.0]])
    n, p, m = sys.n, sys.p, sys.m
    S = well_conditioned(r, n)
    G = well_conditioned(r, p)
    V = well_conditioned(r, m)
    moved = LtiSystem(A=np.linalg.solve(S, sys.A @ S), B=None, D=np.linalg.solve(S, sys.D) @ V,
                      C=G @ sys.C @ S)
    assert bool(is_strongly_observable(moved)) == observable


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_rosenbrock_rank_at_least_n_when_observable(seed):
    r = np.random.default_rng(seed)
    sys, _ = random_strongly_observable(r, 5, 2, 1)
    for s in r.standard_normal(5) + 1j * r.standard_normal(5):
        assert numerical_rank(rosenbrock(sys, s)) >= sys.n


def test_validation_errors():
    with pytest.raises(DimensionError):
        LtiSystem(A=np.ones((2, 3)), B=None, D=None, C=[[1.0, 0.0]])
    with pytest.raises(DimensionError):
        LtiSystem(A=np.eye(2), B=np.ones((3, 1)), D=None, C=[[1.0, 0.0]])
    with pytest.raises(ValidationError):
        LtiSystem(A=np.eye(2), B=None, D=[[1.0], [0.0]], C=[[1.0, 0.0]], bounds=[0.0])
    with pytest.raises(ValidationError):
        LtiSystem(A=np.eye(2), B=None, D=None, C=[[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ValidationError):
        LtiSystem(A=np.eye(2), B=None, D=[[1.0, 2.0], [0.0, 0.0]], C=np.eye(2))
    with pytest.raises(ValueError):
        LtiSystem(A=[[np.inf]], B=None, D=None, C=[[1.0]])


def test_system_json_round_trip(plant):
    again = LtiSystem.from_json(json.dumps(plant.to_dict()))
    for name in ("A", "B", "D", "C", "bounds"):
        np.testing.assert_array_equal(getattr(again, name), getattr(plant, name))


def test_system_json_parse_error_has_position():
    with pytest.raises(ParseError, match="line 2, column"):
        LtiSystem.from_json('{"A": [[1]],\n "C": [[1]] "D": []}')


def test_system_json_schema_errors():
    with pytest.raises(ParseError):
        LtiSystem.from_json("[1, 2]")
    with pytest.raises(ParseError, match="lacks C"):
        LtiSystem.from_json('{"A": [[1]]}')
    with pytest.raises(ParseError):
        LtiSystem.from_json('{"A": [[1, 2], [3]], "C": [[1, 0]]}')


def test_feedthrough_zero_is_identity():
    sys = LtiSystem(A=np.eye(2), B=None, D=[[1.0], [0.0]], C=np.eye(2), F=np.zeros((2, 1)))
    red = eliminate_feedthrough(sys)
    assert red.m_F == 0
    np.testing.assert_array_equal(red.U, np.eye(2))
    np.testing.assert_array_equal(red.V, np.eye(1))
    np.testing.assert_array_equal(red.reduced.A, sys.A)
    assert red.reduced.F is None


def test_feedthrough_scalar_rejected():
    with pytest.raises(ValidationError, match="full row rank"):
        eliminate_feedthrough(scalar(F=[[2.0]]))


def test_feedthrough_random_rank_one(rng):
    n, p, m = 4, 3, 2
    F = np.outer(rng.standard_normal(p), rng.standard_normal(m))
    sys = LtiSystem(A=rng.standard_normal((n, n)), B=None, D=rng.standard_normal((n, m)),
                    C=rng.standard_normal((p, n)), F=F)
    red = eliminate_feedthrough(sys)
    assert red.m_F == 1
    block = np.zeros((p, m))
    block[0, 0] = 1.0
    np.testing.assert_allclose(red.U @ F @ red.V, block, atol=1e-10)
    np.testing.assert_allclose(red.reduced.A, sys.A - red.D0 @ red.C0)
    for s in rng.standard_normal(20) + 1j * rng.standard_normal(20):
        assert numerical_rank(rosenbrock(red.reduced, s)) == n + m - red.m_F


def test_feedthrough_preserves_strong_observability(rng):
    for _ in range(5):
        base, _ = random_strongly_observable(rng, 5, 3, 2)
        F = np.outer(rng.standard_normal(3), rng.standard_normal(2))
        sys = base.replace(F=F)
        assert is_strongly_observable(sys)
        assert is_strongly_observable(eliminate_feedthrough(sys).reduced)
