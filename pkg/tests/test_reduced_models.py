import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqshape.reduced_models import (GfolReducedParams, GforReducedParams, RationalTransfer,
                                      SgReducedParams, gfol_transfer, gfor_transfer, initial_rocof,
                                      penetration_sweep, sg_transfer, standalone_gfor_transfer,
                                      step_response)

base_st = st.builds(SgReducedParams, H=st.floats(1.0, 10.0), R_f_sg=st.floats(0.02, 0.1),
                    tau_turb=st.floats(0.5, 10.0))


def block_diagram_gfol(H, R, tt, alpha, beta, Rg, tp):
    """Closed loop composed from the swing, turbine and converter blocks with numpy polynomials."""
    n = 1 - alpha
    turb, conv = np.array([tt, 1.0]), np.array([tp, 1.0])
    den = np.polyadd(np.polyadd(np.polymul([2 * H * n, 0.0], np.polymul(turb, conv)),
                                n / R * conv), alpha * beta / Rg * turb)
    return np.polymul(turb, conv), den


def test_sg_coefficients():
    tf = sg_transfer(SgReducedParams(H=5, R_f_sg=0.05, tau_turb=5))
    np.testing.assert_allclose(tf.den, [50, 10, 20])
    np.testing.assert_allclose(tf.num, [5, 1])


def test_sg_poles_companion():
    # roots of 50 s^2 + 10 s + 20
    poles = sorted(sg_transfer(SgReducedParams()).poles(), key=lambda z: z.imag)
    np.testing.assert_allclose(poles, [-0.1 - 0.6245j, -0.1 + 0.6245j], atol=5e-5)


def test_gfol_legacy_coefficients():
    p = GfolReducedParams(SgReducedParams(5, 0.05, 5), 0.5, 1.0, 0.05, 0.25)
    np.testing.assert_allclose(gfol_transfer(p, form="legacy").den, [6.25, 26.25, 65, 20])


def test_gfol_expanded_coefficients():
    p = GfolReducedParams(SgReducedParams(5, 0.05, 5), 0.5, 1.0, 0.05, 0.25)
    np.testing.assert_allclose(gfol_transfer(p).den, [6.25, 26.25, 57.5, 20])


def test_gfor_coefficients():
    p = GforReducedParams(SgReducedParams(5, 0.05, 5), 0.8, 0.05, 0.1)
    np.testing.assert_allclose(gfor_transfer(p).den, [18, 83.6, 20])


@settings(max_examples=60, deadline=None)
@given(base_st, st.floats(0.0, 0.95), st.floats(0.0, 1.0), st.floats(0.02, 0.1), st.floats(0.05, 1.0))
def test_gfol_matches_block_diagram(base, alpha, beta, Rg, tp):
    tf = gfol_transfer(GfolReducedParams(base, alpha, beta, Rg, tp))
    num, den = block_diagram_gfol(base.H, base.R_f_sg, base.tau_turb, alpha, beta, Rg, tp)
    np.testing.assert_allclose(tf.den, den, rtol=1e-12)
    np.testing.assert_allclose(tf.num, num, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(base_st, st.floats(0.0, 1.0), st.floats(0.02, 0.1), st.floats(0.01, 5.0))
def test_gfor_dc_gain_is_parallel_droop(base, alpha, Rg, tp):
    tf = gfor_transfer(GforReducedParams(base, alpha, Rg, tp))
    assert tf.dc_gain() == pytest.approx(1.0 / ((1 - alpha) / base.R_f_sg + alpha / Rg), rel=1e-12)
    assert tf.is_stable()


@settings(max_examples=40, deadline=None)
@given(base_st, st.floats(0.02, 0.1), st.floats(0.01, 2.0))
def test_gfor_alpha_one_is_first_order(base, Rg, tp):
    tf = gfor_transfer(GforReducedParams(base, 1.0, Rg, tp))
    ref = np.polymul([1 / Rg], np.polymul([tp, 1.0], [base.tau_turb, 1.0]))
    np.testing.assert_allclose(tf.den, ref, rtol=1e-12)


def test_initial_rocof_laws():
    b = SgReducedParams(H=4, R_f_sg=0.05, tau_turb=6)
    assert initial_rocof(sg_transfer(b), 0.1) == pytest.approx(-0.1 / 8)
    g = gfol_transfer(GfolReducedParams(b, 0.6, 0.3, 0.05, 0.25))
    assert initial_rocof(g, 0.1) == pytest.approx(-0.1 / (8 * 0.4))
    gf = gfor_transfer(GforReducedParams(b, 0.5, 0.05, 0.2))
    assert initial_rocof(gf, 0.1) == pytest.approx(-0.1 * 6 / gf.den[0])


def test_step_response_final_value_and_sign():
    tf = sg_transfer(SgReducedParams())
    r = step_response(tf, 0.1, 200.0, 0.01)
    assert r.y[0] == 0.0
    assert r.final_value() == pytest.approx(-0.1 * 0.05, rel=1e-6)
    assert r.y.min() < r.final_value()  # under-damped SG overshoot


def test_step_response_matches_state_space_oracle():
    from scipy.signal import lti, step
    tf = gfor_transfer(GforReducedParams(alpha=0.4))
    r = step_response(tf, 1.0, 20.0, 0.01)
    _, y = step(lti(tf.num, tf.den), T=r.t)
    np.testing.assert_allclose(r.y, -y, atol=1e-10)


def test_standalone_gfor():
    r = step_response(standalone_gfor_transfer(0.05, 0.1), 0.2, 1.0, 1e-3)
    np.testing.assert_allclose(r.y, -0.05 * 0.2 * (1 - np.exp(-r.t / 0.1)), atol=1e-12)


def test_rational_transfer_validation():
    with pytest.raises(ValueError, match="improper"):
        RationalTransfer((1, 2, 3), (1, 2))
    with pytest.raises(ValueError):
        RationalTransfer((1,), (0, 0))
    assert RationalTransfer((0, 0, 1), (0, 2, 1)).den == (2.0, 1.0)


def test_parameter_validation():
    with pytest.raises(ValueError):
        SgReducedParams(H=-1)
    with pytest.raises(ValueError):
        GfolReducedParams(alpha=1.0)
    with pytest.raises(ValueError):
        GforReducedParams(alpha=1.2)
    with pytest.raises(ValueError, match="form"):
        gfol_transfer(GfolReducedParams(), form="nope")


def test_penetration_sweep_shapes():
    cells = penetration_sweep([0.0, 0.5], [0.0, 1.0], GfolReducedParams(), t_end=40.0, dt=0.01)
    assert [(c.alpha, c.beta) for c in cells] == [(0, 0), (0, 1), (0.5, 0), (0.5, 1)]
    assert cells[0].nadir_ratio == 1.0 and cells[1].rocof_ratio == 1.0
    # converter support improves the nadir, RoCoF gets worse with less inertia either way
    assert cells[3].nadir_ratio < cells[2].nadir_ratio
    assert cells[2].rocof_ratio > 1 and cells[3].rocof_ratio > 1


def test_penetration_sweep_gfor_beta_free():
    cells = penetration_sweep([0.8], [0.0, 1.0], GforReducedParams(), t_end=40.0, dt=0.01)
    assert cells[0].nadir == cells[1].nadir
    with pytest.raises(TypeError):
        penetration_sweep([0.1], [1.0], SgReducedParams())


def test_high_beta_improves_nadir_at_defaults():
    # holds for the default H and tau_turb only, not a general invariant
    cells = penetration_sweep(np.linspace(0.1, 0.9, 9), [0.7, 0.85, 1.0], GfolReducedParams(),
                              t_end=60.0, dt=0.01)
    assert all(c.nadir_ratio < 1.0 for c in cells)


def test_gfor_sweep_can_beat_base_rocof():
    cells = penetration_sweep([0.5, 0.8, 0.95], [1.0], GforReducedParams(tau_p_gfor=1.0),
                              t_end=40.0, dt=0.01)
    assert all(c.rocof_ratio <= 1.0 for c in cells)
