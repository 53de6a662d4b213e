import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqshape.scenarios import case1, case2
from freqshape.smallsignal import (ClassificationError, DefectiveMatrixError, EquilibriumError,
                                   StateSpace, classify_modes, classify_shape, damping_ratio,
                                   dominant, eigen, frequency_states, linearize, modal_analysis,
                                   modes_to_csv, participation_matrix)

from oracles import pf_by_perturbation


def random_stable(rng, n):
    while True:
        M = rng.normal(size=(n, n))
        A = M - (np.abs(np.linalg.eigvals(M).real).max() + 0.5) * np.eye(n)
        lam = np.linalg.eigvals(A)
        gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(n)
        if gaps.min() > 0.05:
            return A


def test_linearize_recovers_linear_system():
    A = np.array([[-1.0, 2.0], [-3.0, -0.5]])
    ss = linearize((lambda x: A @ x + 0.1 * x**2 * 0, np.zeros(2)))
    np.testing.assert_allclose(ss.A, A, atol=1e-9)


def test_linearize_nonlinear_jacobian():
    f = lambda x: np.array([x[1], -np.sin(x[0]) - 0.2 * x[1]])
    ss = linearize((f, np.zeros(2)))
    np.testing.assert_allclose(ss.A, [[0, 1], [-1, -0.2]], atol=1e-9)


def test_linearize_rejects_non_equilibrium():
    with pytest.raises(EquilibriumError):
        linearize((lambda x: x + 1.0, np.zeros(2)))


def test_scenario_linearization_shapes():
    ss = linearize(case1())
    assert ss.A.shape == (16, 16)
    assert ss.input_names == ["load.P", "sg.P0_ref", "vsc.P_star"]
    assert ss.output_names == ["sg.freq", "vsc.freq"]
    # more load slows both machines
    k = ss.state_names.index("sg.dw")
    assert ss.B[k, 0] < 0
    assert np.all(np.linalg.eigvals(ss.A).real < 1e-6)


def test_state_space_validation():
    with pytest.raises(ValueError):
        StateSpace(np.zeros((2, 3)), np.zeros((2, 0)), np.zeros((0, 2)), np.zeros((0, 0)), ["a", "b"])
    with pytest.raises(ValueError):
        StateSpace(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((1, 2)), np.zeros((1, 2)), ["a", "b"])


def test_companion_eigenvalues():
    ed = eigen(np.array([[0, 1], [-20 / 50, -10 / 50]]))
    np.testing.assert_allclose(ed.eigenvalues, [-0.1 + 0.6245j, -0.1 - 0.6245j], atol=5e-5)
    assert ed.eigenvalues[0].imag > 0  # positive member first


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_left_right_biorthogonal(n, seed):
    ed = eigen(random_stable(np.random.default_rng(seed), n))
    assert np.abs(ed.left @ ed.right - np.eye(n)).max() < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_pf_columns_max_normalized(n, seed):
    pf = participation_matrix(eigen(random_stable(np.random.default_rng(seed), n)))
    np.testing.assert_allclose(pf.values.max(axis=0), 1.0, atol=1e-12)
    assert np.all(pf.values >= 0)
    # unnormalized columns sum to |sum_k phi_k psi_k| <= column sum, equality for real modes
    assert np.all(pf.raw.sum(axis=0) >= 1 - 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_pf_invariant_under_diagonal_similarity(n, seed):
    rng = np.random.default_rng(seed)
    A = random_stable(rng, n)
    d = np.exp(rng.uniform(-2, 2, n))
    pf1 = participation_matrix(eigen(A))
    pf2 = participation_matrix(eigen(np.diag(d) @ A @ np.diag(1 / d)))
    np.testing.assert_allclose(pf1.values, pf2.values, atol=1e-9)


def test_pf_matches_eigenvalue_perturbation():
    A = random_stable(np.random.default_rng(7), 5)
    ed = eigen(A)
    pf = participation_matrix(ed)
    lam0, raw = pf_by_perturbation(A)
    for i, lam in enumerate(ed.eigenvalues):
        j = np.argmin(abs(lam0 - lam))
        col = raw[:, j] / raw[:, j].max()
        np.testing.assert_allclose(pf.values[:, i], col, atol=1e-4)


def test_defective_matrix_detected():
    with pytest.raises(DefectiveMatrixError) as err:
        eigen(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert err.value.condition > 1e12


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        eigen(np.array([[np.nan]]))


def test_damping_ratio():
    assert damping_ratio(-1 + 0j) == 1.0
    assert damping_ratio(0j) == 1.0
    assert damping_ratio(complex(-0.3, 0.4)) == pytest.approx(0.6)


@pytest.mark.parametrize("entries,kind", [
    ([1.0, 0.9 * np.exp(0.2j)], "Global"),
    ([1.0, -0.5], "Synchronisation"),
    ([1.0, 0.7 * np.exp(1.6j)], "Other"),
    ([1.0, 0.05], "Synchronisation"),  # second entry below SHAPE_MIN: one machine swings alone
    ([0.0, 0.0], "Other"),
])
def test_classify_shape(entries, kind):
    assert classify_shape(entries) == kind


def test_frequency_states():
    assert frequency_states(["sg.delta", "sg.dw", "vsc.w", "vsc.theta"]) == {"sg": 1, "vsc": 2}


def test_classify_requires_frequency_states():
    ed = eigen(np.diag([-1.0, -2.0]))
    with pytest.raises(ClassificationError):
        classify_modes(ed)


def test_case1_default_modes():
    _, ed, pf, reps = modal_analysis(case1())
    g, s = dominant(reps, "Global"), dominant(reps, "Synchronisation")
    assert g.frequency_pf["sg"] > 0.3 > g.frequency_pf["vsc"]
    assert s.frequency_pf["vsc"] > 0.3 > s.frequency_pf["sg"]
    assert s.f_n > g.f_n
    assert all(r.eigenvalue.real < 0 for r in reps)


def test_modes_csv(tmp_path):
    _, ed, pf, reps = modal_analysis(case2())
    text = modes_to_csv(reps, tmp_path / "m.csv", header="h", include_all=ed)
    lines = text.splitlines()
    assert lines[0] == "# h"
    assert len(lines) == 2 + ed.eigenvalues.size
    assert (tmp_path / "m.csv").read_text() == text
    assert pf.to_csv().count("\n") == 1 + len(ed.state_names)
