import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpdiff import builtins as bi
from mpdiff.errors import InvalidInputError, UnsupportedError
from mpdiff.geometry import EuclideanSpace, FlatTorus
from mpdiff.numerics import fd_gradient, fd_jacobian
from mpdiff.recipe import (
    AntisymmetricBracket,
    Convention,
    DiffusionSpec,
    NoiseModel,
    TargetDensity,
    a_diffusion_drift,
    a_diffusion_terms,
    assemble_a_diffusion,
    assemble_obstruction,
    euclidean_recipe_drift,
    gauge_shift,
    generator_apply,
    hamiltonian_field,
    modular_field,
    to_ito,
    to_stratonovich,
    torus_obstruction_drift,
    volume_free_noise,
)


def _random_case(seed):
    r = np.random.default_rng(seed)
    dim = int(r.integers(1, 4))
    target = bi.gaussian(dim) if r.random() < 0.5 else bi.double_well(dim)
    q = r.standard_normal((dim, dim))
    bracket = AntisymmetricBracket.constant(q - q.T)
    noise = NoiseModel.constant(r.standard_normal((dim, int(r.integers(1, 4)))))
    return target, bracket, noise, r.standard_normal((7, dim))


def _divergence_of_flux(spec, target, x, step=1e-4):
    """Pointwise Ito Fokker-Planck operator applied to p_L, divided by p_L, by nested differences."""
    ito = to_ito(spec)
    n = target.dim

    def flux(z):
        p = np.exp(target.log_p(z))[..., None]
        d = ito.noise.diffusion_matrix(z)
        dp = np.zeros_like(z)
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            dk = (ito.noise.diffusion_matrix(z + e) * np.exp(target.log_p(z + e))[..., None, None]
                  - ito.noise.diffusion_matrix(z - e) * np.exp(target.log_p(z - e))[..., None, None]) / (2 * step)
            dp += dk[..., :, k]
        return ito.drift_at(z) * p - dp

    jac = fd_jacobian(flux, x, step)
    return -np.trace(jac, axis1=-2, axis2=-1) / np.exp(target.log_p(x))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_recipe_matches_ito_a_diffusion_constant_coefficients(seed):
    target, bracket, noise, x = _random_case(seed)
    spec = to_ito(assemble_a_diffusion(bracket, noise, target))
    np.testing.assert_allclose(spec.drift_at(x), euclidean_recipe_drift(bracket, noise, target, x),
                               rtol=0, atol=1e-10 * (1 + np.abs(x).max() ** 3))


@pytest.mark.parametrize("bracket", ["zero", "constant_bracket", "stream_function"])
@pytest.mark.parametrize("noise", ["isotropic", "multiplicative", "coupled", "volume_free"])
def test_recipe_matches_ito_a_diffusion_variable_coefficients(bracket, noise):
    dim = 3
    target = bi.double_well(dim, reference_scale=1.5)
    a = bi.BRACKETS[bracket](dim)
    y = bi.make_noise(noise, dim, None, target)
    x = np.random.default_rng(1).standard_normal((9, dim))
    spec = to_ito(assemble_a_diffusion(a, y, target))
    np.testing.assert_allclose(spec.drift_at(x), euclidean_recipe_drift(a, y, target, x), atol=1e-10)


def test_hamiltonian_field_sign_convention():
    target = bi.gaussian(2, variances=[1.0, 1.0])
    a = AntisymmetricBracket.constant([[0.0, 1.0], [-1.0, 0.0]])
    x = np.array([2.0, 0.0])
    # -A grad H with grad H = x
    np.testing.assert_allclose(hamiltonian_field(a, target, x), [0.0, 2.0])


def test_beta_scales_bracket_part_linearly():
    x = np.array([[0.3, -0.7]])
    a = bi.stream_function(2)
    t1 = bi.gaussian(2)
    t2 = t1.with_beta(2.5)
    np.testing.assert_allclose(hamiltonian_field(a, t2, x), 2.5 * hamiltonian_field(a, t1, x), rtol=1e-14)


def test_modular_field_components_follow_index_convention():
    # A = psi(x) E with E[0,1] = 1: (d_j A^{ij})_0 = d_1 psi, _1 = -d_0 psi
    def psi(x):
        return x[..., 0] ** 2 * x[..., 1]

    e = np.array([[0.0, 1.0], [-1.0, 0.0]])
    a = AntisymmetricBracket(2, lambda x: psi(x)[..., None, None] * e)
    x = np.array([1.5, -0.5])
    np.testing.assert_allclose(modular_field(a, None, x), [1.5**2, -2 * 1.5 * -0.5], atol=1e-7)


def test_modular_field_with_reference_adds_a_grad_rho():
    target = bi.double_well(2, reference_scale=1.5)
    a = bi.constant_bracket(2)
    x = np.array([[0.4, -1.1]])
    expected = np.einsum("...ij,...j->...i", a.matrix(x), target.grad_rho(x))
    np.testing.assert_allclose(modular_field(a, target, x), expected, atol=1e-15)


def test_stationarity_pointwise_for_variable_coefficients():
    target = bi.double_well(2)
    spec = assemble_a_diffusion(bi.stream_function(2), bi.coupled(2), target)
    x = np.random.default_rng(5).uniform(-1.2, 1.2, (6, 2))
    assert np.max(np.abs(_divergence_of_flux(spec, target, x))) < 1e-5


def test_gaussian_target_gradient_check_runs():
    with pytest.raises(InvalidInputError):
        TargetDensity(1, lambda x: x[..., 0] ** 2, lambda x: 3 * x)


def test_target_rejects_non_positive_beta():
    with pytest.raises(InvalidInputError):
        bi.gaussian(1, beta=0.0)


def test_bracket_must_be_antisymmetric():
    with pytest.raises(InvalidInputError):
        AntisymmetricBracket.constant([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(InvalidInputError):
        AntisymmetricBracket(2, lambda x: np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)))


def test_bracket_divergence_checked_against_fd():
    with pytest.raises(InvalidInputError):
        AntisymmetricBracket(
            2,
            lambda x: x[..., 0, None, None] * np.array([[0.0, 1.0], [-1.0, 0.0]]),
            lambda x: np.zeros(np.shape(x)) + 5.0,
        )


def test_noise_jacobian_checked_against_fd():
    with pytest.raises(InvalidInputError):
        NoiseModel(1, 1, lambda x: x[..., None, :] ** 2, lambda x: np.ones(np.shape(x)[:-1] + (1, 1, 1)))


def test_dimension_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        assemble_a_diffusion(bi.zero_bracket(2), bi.isotropic(3), bi.gaussian(2))


def test_convention_roundtrip():
    spec = assemble_a_diffusion(bi.stream_function(2), bi.multiplicative(2), bi.gaussian(2))
    x = np.random.default_rng(2).standard_normal((5, 2))
    back = to_stratonovich(to_ito(spec))
    np.testing.assert_allclose(back.drift_at(x), spec.drift_at(x), atol=1e-14)
    assert to_ito(spec).convention is Convention.ITO
    assert "ito_correction" in to_ito(spec).parts


def test_ito_correction_hand_value():
    # Y(x) = x in one dimension: correction 1/2 Y' Y = x/2
    noise = NoiseModel(1, 1, lambda x: x[..., None, :], lambda x: np.ones(np.shape(x)[:-1] + (1, 1, 1)))
    np.testing.assert_allclose(noise.ito_correction(np.array([[3.0]])), [[1.5]])


def test_generator_apply_conventions_agree():
    spec = assemble_a_diffusion(bi.stream_function(2), bi.coupled(2), bi.double_well(2))
    x = np.random.default_rng(8).standard_normal((4, 2))

    def f(z):
        return np.sin(z[..., 0]) * z[..., 1] ** 2

    np.testing.assert_allclose(generator_apply(spec, f, x), generator_apply(to_ito(spec), f, x), atol=1e-5)


def test_generator_annihilates_constants():
    spec = assemble_a_diffusion(bi.constant_bracket(2), bi.multiplicative(2), bi.gaussian(2))
    x = np.random.default_rng(0).standard_normal((3, 2))
    out = generator_apply(spec, lambda z: np.full(z.shape[:-1], 4.0), x,
                          lambda z: np.zeros(z.shape), lambda z: np.zeros(z.shape + (2,)))
    np.testing.assert_array_equal(out, 0.0)


def test_gauge_shift_leaves_modular_field_unchanged():
    target = bi.double_well(3, reference_scale=1.5)
    base = bi.stream_function(3)

    def phi(x):
        return np.sin(x[..., 0]) * np.cos(x[..., 1] - x[..., 2])

    shifted = gauge_shift(base, phi, lambda x: fd_gradient(phi, x), measure=target.grad_rho)
    x = np.random.default_rng(3).standard_normal((6, 3))
    np.testing.assert_allclose(modular_field(shifted, target, x), modular_field(base, target, x), atol=1e-6)
    np.testing.assert_allclose(shifted.divergence(x), shifted._fd_divergence(x), atol=1e-6)


def test_gauge_shift_needs_three_dimensions():
    with pytest.raises(UnsupportedError):
        gauge_shift(bi.zero_bracket(2), lambda x: x[..., 0], lambda x: np.ones(np.shape(x)))


def test_volume_free_fields_are_divergence_free_for_reference():
    target = bi.double_well(3, reference_scale=1.5)
    noise = bi.volume_free(3, reference=target)
    x = np.random.default_rng(4).standard_normal((5, 3))
    div_mu = noise.lebesgue_divergences(x) + np.einsum("...ka,...a->...k", noise.field_values(x), target.grad_rho(x))
    np.testing.assert_allclose(div_mu, 0.0, atol=1e-12)


def test_volume_free_noise_fd_fallback():
    pots = [bi.stream_function(2)]
    noise = volume_free_noise(pots)
    x = np.array([[0.2, 0.9]])
    np.testing.assert_allclose(noise.lebesgue_divergences(x), 0.0, atol=1e-7)


def test_torus_obstruction_for_uniform_target_is_constant():
    torus = FlatTorus(2, (2.0, 2.0))
    target = bi.uniform(2, torus)
    x = np.random.default_rng(0).random((4, 2))
    np.testing.assert_allclose(torus_obstruction_drift([0.5, -1.0], target, x), np.tile([0.5, -1.0], (4, 1)))


def test_obstruction_requires_torus():
    with pytest.raises(UnsupportedError):
        torus_obstruction_drift([1.0], bi.gaussian(1), np.zeros(1))
    with pytest.raises(UnsupportedError):
        DiffusionSpec(EuclideanSpace(1), lambda x: x, NoiseModel.zero(1), "ito", obstruction=[1.0])


def test_obstruction_spec_is_not_reversible():
    torus = FlatTorus(1, (2.0,))
    spec = assemble_obstruction([1.0], bi.uniform(1, torus))
    assert not spec.reversible
    assert "obstruction" in spec.parts


def test_a_diffusion_terms_sum_to_drift():
    target = bi.gaussian(3)
    a, y = bi.stream_function(3), bi.coupled(3)
    terms = a_diffusion_terms(a, y, target)
    x = np.random.default_rng(9).standard_normal((5, 3))
    total = sum(t(x) for t in terms.values())
    np.testing.assert_allclose(total, a_diffusion_drift(a, y, target, x), atol=1e-14)


def test_without_removes_named_term():
    spec = assemble_a_diffusion(bi.constant_bracket(2), bi.isotropic(2), bi.gaussian(2))
    reduced = spec.without("hamiltonian")
    assert "hamiltonian" not in reduced.parts
    with pytest.raises(InvalidInputError):
        spec.without("nonexistent")


def test_linear_independence_is_reported():
    y = bi.isotropic(2)
    assert bool(y.linearly_independent(np.zeros(2)))
    dup = NoiseModel.constant(np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert not bool(dup.linearly_independent(np.zeros(2)))
