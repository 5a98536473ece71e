import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from oracles import qcp_rmsd
from kinsample.analysis import correlation_matrix, kabsch, rejection_table, rmsd


def ensemble_with(rng, m=200, n=5):
    return rng.normal(0, 1, (m, n, 3)) + rng.normal(0, 5, (1, n, 3))


def test_identical_motion_correlates_to_one():
    rng = np.random.default_rng(0)
    X = ensemble_with(rng)
    X[:, 1] = X[:, 0] + [3.0, 0, 0]
    C = correlation_matrix(X, range(5)).values
    assert C[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_opposite_motion_correlates_to_minus_one():
    rng = np.random.default_rng(1)
    X = ensemble_with(rng)
    X[:, 1] = -(X[:, 0] - X[:, 0].mean(0)) + [1.0, 2.0, 3.0]
    C = correlation_matrix(X, [0, 1]).values
    assert C[0, 1] == pytest.approx(-1.0, abs=1e-12)


def test_independent_motion_near_zero():
    rng = np.random.default_rng(2)
    X = rng.normal(0, 1, (10_000, 2, 3))
    assert abs(correlation_matrix(X, [0, 1]).values[0, 1]) < 0.05


def test_immobile_atom_gets_zero_row():
    rng = np.random.default_rng(3)
    X = ensemble_with(rng)
    X[:, 2] = [1.0, 1.0, 1.0]
    C = correlation_matrix(X, range(5)).values
    assert np.all(C[2] == 0) and np.all(C[:, 2] == 0)
    assert C[0, 0] == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1))
def test_correlation_symmetric_bounded_offset_invariant(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(2, 40)), int(rng.integers(1, 8))
    X = rng.normal(0, rng.uniform(0.01, 3), (m, n, 3))
    C = correlation_matrix(X, range(n)).values
    np.testing.assert_allclose(C, C.T, atol=1e-12)
    assert np.all(np.abs(C) <= 1 + 1e-12)
    shifted = X + rng.normal(0, 10, (1, n, 3))
    np.testing.assert_allclose(correlation_matrix(shifted, range(n)).values, C, atol=1e-10)


def test_superposed_correlation_ignores_rigid_motion():
    rng = np.random.default_rng(4)
    base = rng.normal(0, 3, (6, 3))
    X = np.array([Rotation.random(random_state=k).apply(base) + rng.normal(0, 5, 3) for k in range(30)])
    C = correlation_matrix(X, range(6), superpose=True).values
    np.testing.assert_allclose(C, 0.0, atol=1e-6)


def test_correlation_errors_and_csv():
    X = np.zeros((3, 2, 3))
    with pytest.raises(ValueError):
        correlation_matrix(X, [])
    with pytest.raises(ValueError):
        correlation_matrix(X[:1], [0])
    text = correlation_matrix(X, [0, 1], labels=["A1/CA", "A2/CA"]).to_csv()
    assert text.splitlines()[0] == ",A1/CA,A2/CA"


# -- RMSD --------------------------------------------------------------------

def test_rmsd_examples():
    rng = np.random.default_rng(5)
    A = rng.normal(0, 3, (20, 3))
    assert rmsd(A, A, superpose=False) == 0.0
    assert rmsd(A, A) == pytest.approx(0.0, abs=1e-12)
    moved = Rotation.random(random_state=1).apply(A) + [4.0, -2.0, 7.0]
    assert rmsd(moved, A) == pytest.approx(0.0, abs=1e-10)
    assert rmsd(A + [1.0, 0, 0], A, superpose=False) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        rmsd(A, A, selection=[])


@given(st.integers(0, 2**32 - 1))
def test_rmsd_matches_quaternion_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 60))
    A = rng.normal(0, 4, (n, 3))
    B = Rotation.random(random_state=seed % 1000).apply(A + rng.normal(0, rng.uniform(0, 2), (n, 3)))
    assert rmsd(A, B) == pytest.approx(qcp_rmsd(A, B), abs=1e-8)
    R, _ = kabsch(A, B)
    assert np.linalg.det(R) == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_rmsd_pseudometric(seed, superpose):
    rng = np.random.default_rng(seed)
    A, B, C = rng.normal(0, 2, (3, 15, 3))
    assert rmsd(A, B, superpose=superpose) == pytest.approx(rmsd(B, A, superpose=superpose), abs=1e-10)
    if not superpose:
        assert rmsd(A, C, superpose=False) <= rmsd(A, B, superpose=False) + rmsd(B, C, superpose=False) + 1e-12


# -- rejection table -------------------------------------------------------------

def test_rejection_rates():
    stats = {"accepted": 90, "clash_rejected": 4, "disk_rejected": 6, "degenerate": 0}
    t = rejection_table([stats], labels=["NIK5"])
    assert t.rows[0]["clash_rate"] == 0.04
    assert "4%" in t.table() and "6%" in t.table()
    assert "0.040000" in t.to_csv()


def test_zero_attempts_reported_na():
    t = rejection_table([{}], labels=["empty"])
    assert t.rows[0]["clash_rate"] is None
    assert "n/a" in t.table() and "n/a" in t.to_csv()
    with pytest.raises(ValueError):
        rejection_table([])
