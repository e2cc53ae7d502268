"""Interpolation, differentiation and combinators for operator paths."""

import numpy as np
import pytest

from sfcalc.engines import sf_crossing
from sfcalc.errors import DomainError, ValidationError
from sfcalc.generators import (random_block_model, random_path,
                               random_unitary_path, rng_from_seed,
                               scalar_linear_path)
from sfcalc.path import (OperatorPath, concatenate, conjugate, direct_sum,
                         flatten_endpoints, reverse)
from sfcalc.tracemodel import BlockHermitian, WeightedBlockModel, eigh


def scalar_model():
    return WeightedBlockModel([(1, 1.0)])


def scalar_path_from(values, interpolation="linear"):
    model = scalar_model()
    us = np.linspace(0.0, 1.0, len(values))
    samples = [(float(u), BlockHermitian(model, [[v]])) for u, v in zip(us, values)]
    return OperatorPath(model, samples, interpolation=interpolation)


def test_eval_linear_midpoint():
    path = scalar_path_from([-1.0, 1.0])
    assert path.eval(0.5).mat[0, 0].real == 0.0


def test_eval_exact_at_nodes():
    path = scalar_path_from([0.3, -0.7, 2.0])
    assert path.eval(0.5).mat[0, 0].real == -0.7


def test_eval_outside_domain():
    path = scalar_path_from([-1.0, 1.0])
    with pytest.raises(DomainError):
        path.eval(1.5)


def test_cubic_eval_reproduces_quadratic():
    us = np.linspace(0.0, 1.0, 5)
    path = scalar_path_from([u ** 2 for u in us], interpolation="cubic")
    assert path.eval(0.3).mat[0, 0].real == pytest.approx(0.09, abs=1e-6)


def test_cubic_derivative_reproduces_quadratic():
    us = np.linspace(0.0, 1.0, 5)
    path = scalar_path_from([u ** 2 for u in us], interpolation="cubic")
    assert path.derivative(0.5).mat[0, 0].real == pytest.approx(1.0, abs=1e-6)


def test_linear_derivative_constant():
    path = scalar_path_from([-1.0, 1.0])
    for u in (0.0, 0.25, 0.9):
        assert path.derivative(u).mat[0, 0].real == pytest.approx(2.0)


def test_constant_path_derivative_zero():
    path = scalar_path_from([0.4, 0.4, 0.4])
    assert path.derivative(0.6).mat[0, 0].real == 0.0


def test_path_validation():
    model = scalar_model()
    op = model.identity()
    with pytest.raises(ValidationError):
        OperatorPath(model, [(0.0, op)])
    with pytest.raises(ValidationError):
        OperatorPath(model, [(0.1, op), (1.0, op)])
    with pytest.raises(ValidationError):
        OperatorPath(model, [(0.0, op), (1.0, 2.0 * op)], endpoint_flat=True)


def test_concatenate_constant_paths():
    a = scalar_path_from([1.0, 1.0])
    b = scalar_path_from([1.0, 1.0])
    glued = concatenate(a, b)
    for u in (0.0, 0.3, 0.77, 1.0):
        assert glued.eval(u).mat[0, 0].real == 1.0


def test_concatenate_linear_halves():
    a = scalar_path_from([-1.0, 0.0])
    b = scalar_path_from([0.0, 1.0])
    glued = concatenate(a, b)
    assert 0.5 in glued.nodes
    assert glued.eval(0.5).mat[0, 0].real == 0.0
    assert glued.eval(0.25).mat[0, 0].real == pytest.approx(-0.5)


def test_concatenate_mismatch_rejected():
    a = scalar_path_from([-1.0, 0.5])
    b = scalar_path_from([0.0, 1.0])
    with pytest.raises(ValidationError):
        concatenate(a, b)


def test_concatenation_additivity_of_crossing_flow():
    # invertible splice points, random pairs
    for seed in range(8):
        rng = rng_from_seed(900 + seed)
        model = random_block_model(rng, max_blocks=2, max_block_dim=3)
        a = random_path(rng, model, num_samples=5)
        b_raw = random_path(rng, model, num_samples=5)
        # shift b to start where a ends so the splice is well defined
        offset = a.eval(1.0).mat - b_raw.eval(0.0).mat
        samples = [(float(u), BlockHermitian(model, b_raw.sample(j).mat + offset))
                   for j, u in enumerate(b_raw.us)]
        b = OperatorPath(model, samples)
        splice_gap = np.min(np.abs(eigh(a.eval(1.0)).eigenvalues))
        if splice_gap <= 1e-6:
            continue
        total = sf_crossing(concatenate(a, b)).value
        assert total == sf_crossing(a).value + sf_crossing(b).value


def test_conjugate_identity_fixes_path():
    rng = rng_from_seed(4)
    model = random_block_model(rng)
    path = random_path(rng, model, num_samples=5)
    same = conjugate(path, np.eye(model.dim, dtype=complex))
    for j in range(len(path.us)):
        assert np.allclose(same.sample(j).mat, path.sample(j).mat)


def test_conjugate_commuting_diagonal_unitary():
    path = scalar_path_from([-1.0, 0.2, 1.0])
    u = np.array([[np.exp(1j * 0.3)]])
    rotated = conjugate(path, u)
    for j in range(3):
        assert np.allclose(rotated.sample(j).mat, path.sample(j).mat)


def test_conjugate_preserves_spectra():
    rng = rng_from_seed(21)
    model = random_block_model(rng)
    path = random_path(rng, model, num_samples=5)
    mats = random_unitary_path(rng, model, 5)
    rotated = conjugate(path, mats)
    for j in range(5):
        lam0 = eigh(path.sample(j)).eigenvalues
        lam1 = eigh(rotated.sample(j)).eigenvalues
        assert np.allclose(lam0, lam1, atol=1e-9)


def test_conjugate_rejects_non_unitary():
    path = scalar_path_from([-1.0, 1.0])
    with pytest.raises(ValidationError):
        conjugate(path, np.array([[2.0]], dtype=complex))


def test_weyl_spectral_continuity():
    rng = rng_from_seed(17)
    model = random_block_model(rng)
    path = random_path(rng, model, num_samples=9)
    us = np.linspace(0.0, 1.0, 33)
    for a, b in zip(us[:-1], us[1:]):
        lam_a = eigh(path.eval(a)).eigenvalues
        lam_b = eigh(path.eval(b)).eigenvalues
        step = np.linalg.norm(path.eval(b).mat - path.eval(a).mat, 2)
        assert np.abs(lam_a - lam_b).max() <= step + 1e-12


def test_reverse_swaps_endpoints():
    path = scalar_path_from([-1.0, 0.3, 1.0])
    rev = reverse(path)
    assert rev.eval(0.0).mat[0, 0].real == 1.0
    assert rev.eval(1.0).mat[0, 0].real == -1.0


def test_direct_sum_block_structure():
    a = scalar_path_from([-1.0, 1.0])
    b = scalar_path_from([0.5, 0.5, 0.5])
    both = direct_sum(a, b)
    assert both.model.dim == 2
    assert both.eval(0.5).mat[0, 0].real == 0.0
    assert both.eval(0.5).mat[1, 1].real == 0.5


def test_flatten_endpoints_marks_flat():
    path = scalar_path_from([-1.0, 1.0])
    flat = flatten_endpoints(path)
    assert flat.endpoint_flat
    assert np.array_equal(flat.sample(0).mat, flat.sample(1).mat)
    assert flat.eval(0.0).mat[0, 0].real == -1.0
    assert flat.eval(1.0).mat[0, 0].real == 1.0
