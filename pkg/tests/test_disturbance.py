import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gimbal_adrc.disturbance import (N_TERMS, BaseMotionProfile, DisturbanceCoeffs, Distortion,
                                     Sinusoid, default_coeff_set, disturbance_torque,
                                     load_base_motion_csv, make_coeff_set, monomial_basis,
                                     monomial_basis_batch, sample_base_motion, term_names,
                                     write_base_motion_csv)
from gimbal_adrc.dynamics import GimbalParams, GimbalState
from gimbal_adrc.errors import InvalidInputError

GOLDEN = Path(__file__).parent / "golden" / "basis_terms.txt"

finite = st.floats(-2, 2)


def _evaluate(name, th, th_dot, psi, psi_dot):
    env = {"th": th, "th_dot": th_dot, "psi": psi, "psi_dot": psi_dot}
    value = 1.0
    for factor in name.split("*"):
        base, _, power = factor.partition("^")
        value *= 1.0 if base == "1" else env[base] ** int(power or 1)
    return value


def test_basis_ordering_matches_golden_file():
    assert term_names() == GOLDEN.read_text().split()
    assert N_TERMS == 37 == 8 + math.comb(8, 2) + 1


@settings(max_examples=100, deadline=None)
@given(th=finite, th_dot=finite, psi=finite, psi_dot=finite)
def test_basis_values_follow_term_names(th, th_dot, psi, psi_dot):
    basis = monomial_basis(th, th_dot, psi, psi_dot)
    expected = [_evaluate(n, th, th_dot, psi, psi_dot) for n in GOLDEN.read_text().split()]
    np.testing.assert_allclose(basis, expected, rtol=1e-12, atol=1e-300)


def test_basis_examples():
    np.testing.assert_array_equal(monomial_basis(0, 0, 0, 0), [0.0] * 36 + [1.0])
    basis = dict(zip(term_names(), monomial_basis(0.0, 0.2, 0.0, 0.0)))
    assert basis["th_dot"] == 0.2
    assert basis["th_dot^2"] == pytest.approx(0.04)
    assert basis["th_dot*th_dot^2"] == pytest.approx(0.008)
    assert basis["1"] == 1.0
    others = {k: v for k, v in basis.items() if k not in ("th_dot", "th_dot^2", "th_dot*th_dot^2", "1")}
    assert not any(others.values())


def test_batch_basis_matches_scalar():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 4))
    batch = monomial_basis_batch(*x.T)
    for row, b in zip(x, batch):
        np.testing.assert_array_equal(monomial_basis(*row), b)


def test_torque_examples():
    state = GimbalState(0.2, -0.1, 1.0, 0.5)
    assert np.array_equal(disturbance_torque(DisturbanceCoeffs(), state), [0.0, 0.0])
    bias = np.zeros(N_TERMS)
    bias[-1] = 0.01
    for s in (GimbalState(), state):
        assert disturbance_torque(DisturbanceCoeffs(bias), s)[0] == pytest.approx(0.01, abs=1e-18)
    c = default_coeff_set()
    base = disturbance_torque(c, state)
    np.testing.assert_allclose(disturbance_torque(c.scaled(2.0, 3.0), state), base * [2.0, 3.0], rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed1=st.integers(0, 1000), seed2=st.integers(0, 1000),
       x=st.tuples(st.floats(-0.7, 0.7), st.floats(-0.3, 0.3), finite, finite))
def test_torque_linear_in_coefficients(seed1, seed2, x):
    c1, c2 = make_coeff_set(seed1, 1.0), make_coeff_set(seed2, 0.5)
    state = GimbalState(*x)
    np.testing.assert_allclose(disturbance_torque(c1 + c2, state),
                               disturbance_torque(c1, state) + disturbance_torque(c2, state),
                               rtol=1e-12, atol=1e-14)


def test_coeff_set_generation():
    zero = make_coeff_set(3, 0.0)
    assert not np.any(zero.coeffs_az) and not np.any(zero.coeffs_el)
    a, b = make_coeff_set(9, 1.0), make_coeff_set(9, 1.0)
    assert np.array_equal(a.coeffs_az, b.coeffs_az) and np.array_equal(a.coeffs_el, b.coeffs_el)
    assert not np.array_equal(a.coeffs_az, make_coeff_set(10, 1.0).coeffs_az)
    with pytest.raises(InvalidInputError):
        make_coeff_set(1, -1.0)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_coeff_set_magnitude_monte_carlo(seed):
    # In-FOR angles, rates up to 2 rad/s.
    rng = np.random.default_rng(100 + seed)
    n = 100_000
    th = rng.uniform(-math.radians(20), math.radians(20), n)
    psi = rng.uniform(-math.radians(45), math.radians(45), n)
    th_dot, psi_dot = rng.uniform(-2, 2, (2, n))
    basis = monomial_basis_batch(th, th_dot, psi, psi_dot)
    c = make_coeff_set(seed, 0.05)
    for coeffs in (c.coeffs_az, c.coeffs_el):
        peak = np.abs(basis @ coeffs).max()
        assert 0.01 <= peak <= 0.25


def test_coeffs_validation():
    with pytest.raises(InvalidInputError):
        DisturbanceCoeffs(np.zeros(36))
    with pytest.raises(InvalidInputError):
        DisturbanceCoeffs(np.full(37, np.nan))


def test_distortion_applies_to_plant_only_fields():
    p = Distortion(cog_az_y=-0.01, cog_el_z=-0.01, inertia_az_xy=0.02).apply(GimbalParams())
    assert p.r_Ga_a[1] == -0.01 and p.r_Gm_m[2] == -0.01
    assert p.inertia_az[0, 1] == p.inertia_az[1, 0] == 0.02
    assert np.array_equal(Distortion().apply(GimbalParams()).r_Ga_a, GimbalParams().r_Ga_a)


def test_base_motion_zero_and_sinusoid():
    assert sample_base_motion(BaseMotionProfile(), 3.7).is_stationary
    profile = BaseMotionProfile("sinusoid-mix", {"p": [Sinusoid(0.1, 1.0)]}, {"az": 0.5})
    s = sample_base_motion(profile, 0.25)
    assert s.p == pytest.approx(0.1, abs=1e-15)
    assert s.a_z == 0.5
    # Angular acceleration is the analytic derivative: 0.1 * 2 pi cos(pi/2) = 0.
    assert s.p_dot == pytest.approx(0.0, abs=1e-15)
    assert sample_base_motion(profile, 0.0).p_dot == pytest.approx(0.2 * math.pi)


def test_base_motion_csv(tmp_path):
    table = np.zeros((3, 10))
    table[:, 0] = [0.0, 1.0, 2.0]
    table[:, 1] = [0.0, 2.0, 1.0]
    path = tmp_path / "base.csv"
    write_base_motion_csv(path, table)
    profile = load_base_motion_csv(path)
    assert sample_base_motion(profile, 0.5).p == pytest.approx(1.0)
    for t, p in zip(table[:, 0], table[:, 1]):
        assert sample_base_motion(profile, t).p == p
    with pytest.raises(InvalidInputError):
        sample_base_motion(profile, 2.5)
    with pytest.raises(InvalidInputError):
        BaseMotionProfile("csv", table=table[::-1])


def test_base_motion_validation():
    with pytest.raises(InvalidInputError):
        Sinusoid(1.0, -1.0)
    with pytest.raises(InvalidInputError):
        BaseMotionProfile("sinusoid-mix", {"yaw": [Sinusoid(1.0, 1.0)]})
    with pytest.raises(InvalidInputError):
        sample_base_motion(BaseMotionProfile(), -0.1)
