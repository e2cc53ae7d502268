"""Suspension-operator assembly, index, half-line inverse, truncation sweep."""

import math

import numpy as np
import pytest

from sfcalc.apsindex import (SuspensionProblem, aps_index, assemble,
                             halfline_aps_apply_inverse, halfline_residual,
                             perturbation_truncation_check)
from sfcalc.engines import sf_crossing
from sfcalc.errors import PreconditionError, ValidationError
from sfcalc.generators import (involution_path, random_block_model,
                               random_path, rng_from_seed, scalar_linear_path,
                               single_crossing_path)
from sfcalc.path import OperatorPath, concatenate, flatten_endpoints
from sfcalc.tracemodel import BlockHermitian, WeightedBlockModel, eigh


def constant_path(value, model=None, flat=True):
    model = model or WeightedBlockModel([(1, 1.0)])
    us = np.linspace(0.0, 1.0, 9)
    samples = [(float(u), BlockHermitian(model, value * np.eye(model.dim)))
               for u in us]
    return OperatorPath(model, samples, endpoint_flat=flat)


# ---------------------------------------------------------------------------
# assembly

def test_assemble_zero_path_dimensions_and_kernels():
    # 0 counts as nonnegative, so the condition f(0) = 0 applies at the left
    prob = SuspensionProblem(path=constant_path(0.0), grid_size=32)
    a, adj = assemble(prob)
    assert a.shape == (32, 32)
    assert adj.shape == (32, 32)
    assert np.linalg.svd(a, compute_uv=False).min() > 1e-3
    assert np.linalg.svd(adj, compute_uv=False).min() > 1e-3


def test_assemble_positive_constant_no_kernel():
    prob = SuspensionProblem(path=constant_path(0.9), grid_size=32)
    a, _ = assemble(prob)
    assert a.shape == (32, 32)
    assert np.linalg.svd(a, compute_uv=False).min() > 1e-3


def test_assemble_single_crossing_kernel_matches_ode_oracle():
    # f' + (2u-1) f = 0 with free boundary values: f = exp(-(u^2-u))
    path = flatten_endpoints(single_crossing_path(), margin=0.15)
    prob = SuspensionProblem(path=path, grid_size=200)
    a, adj = assemble(prob)
    # one more column than rows: the kernel is the structural rank deficit
    assert a.shape[1] - a.shape[0] == 1
    u_mat, sigma, vt = np.linalg.svd(a)
    assert sigma.min() > 1e-3  # full row rank, kernel exactly 1-dimensional
    assert np.linalg.svd(adj, compute_uv=False).min() > 1e-3

    # ODE oracle: the kernel of f' + D(t) f = 0 is exp(-int_0^t D), with D
    # the path coefficient; integrate it independently by fine trapezoid
    null = vt[-1].conj()
    fine = np.linspace(0.0, 1.0, 4001)
    coeff = np.array([path.eval(float(t)).mat[0, 0].real for t in fine])
    anti = np.concatenate([[0.0], np.cumsum(0.5 * (coeff[1:] + coeff[:-1])
                                            * np.diff(fine))])
    nodes = np.linspace(0.0, 1.0, 201)
    oracle = np.exp(-np.interp(nodes, fine, anti))
    overlap = abs(null @ oracle) / (np.linalg.norm(null) * np.linalg.norm(oracle))
    assert overlap > 1.0 - 1e-4


def test_interval_requires_flat_path():
    with pytest.raises(ValidationError):
        SuspensionProblem(path=single_crossing_path(), grid_size=32)


def test_cylinder_requires_invertible_endpoints():
    with pytest.raises(ValidationError):
        SuspensionProblem(path=scalar_linear_path(0.0, 1.0), grid_size=32,
                          geometry="cylinder")


# ---------------------------------------------------------------------------
# index values

def test_index_single_crossing_interval():
    path = flatten_endpoints(single_crossing_path(), margin=0.15)
    assert aps_index(SuspensionProblem(path=path, grid_size=200)) == 1.0


def test_index_single_crossing_cylinder():
    prob = SuspensionProblem(path=single_crossing_path(), grid_size=200,
                             geometry="cylinder")
    assert aps_index(prob) == 1.0


def test_index_constant_invertible():
    assert aps_index(SuspensionProblem(path=constant_path(-0.8), grid_size=48)) == 0.0


def test_index_involution_normalization():
    model = WeightedBlockModel([(3, 1.0)])
    path, expected = involution_path(model, [2], rng=rng_from_seed(6))
    flat = flatten_endpoints(path, margin=0.12, num_samples=41)
    assert expected == 2.0
    assert aps_index(SuspensionProblem(path=flat, grid_size=200)) == 2.0


def test_index_stability_gate():
    path = flatten_endpoints(single_crossing_path(), margin=0.15)
    prob = SuspensionProblem(path=path, grid_size=64)
    assert aps_index(prob, check_stability=True) == 1.0


def test_scheme_agreement():
    for seed in range(4):
        rng = rng_from_seed(6200 + seed)
        model = random_block_model(rng, max_blocks=2, max_block_dim=3)
        path = random_path(rng, model, num_samples=7, endpoint_flat=True)
        values = {scheme: aps_index(SuspensionProblem(
            path=path, grid_size=200, scheme=scheme))
            for scheme in ("forward-upwind", "implicit-midpoint")}
        assert values["forward-upwind"] == values["implicit-midpoint"]


def test_cylinder_interval_agreement():
    for seed in range(4):
        rng = rng_from_seed(6300 + seed)
        model = random_block_model(rng, max_blocks=2, max_block_dim=3)
        path = random_path(rng, model, num_samples=7, endpoint_flat=True)
        interval = aps_index(SuspensionProblem(path=path, grid_size=128))
        cylinder = aps_index(SuspensionProblem(
            path=path, grid_size=128, geometry="cylinder", cylinder_length=2.0))
        assert interval == cylinder


def test_cut_additivity():
    # invertible splice: index adds over concatenation
    for seed in range(4):
        rng = rng_from_seed(6400 + seed)
        model = random_block_model(rng, max_blocks=2, max_block_dim=2)
        a = random_path(rng, model, num_samples=5)
        b_raw = random_path(rng, model, num_samples=5)
        offset = a.eval(1.0).mat - b_raw.eval(0.0).mat
        b = OperatorPath(model, [
            (float(u), BlockHermitian(model, b_raw.sample(j).mat + offset))
            for j, u in enumerate(b_raw.us)])
        if np.min(np.abs(eigh(a.eval(1.0)).eigenvalues)) <= 1e-6:
            continue
        def idx(p):
            return aps_index(SuspensionProblem(
                path=flatten_endpoints(p, num_samples=31), grid_size=128))
        assert idx(concatenate(a, b)) == idx(a) + idx(b)


def test_index_equals_flow_quick():
    for seed in range(6):
        rng = rng_from_seed(6500 + seed)
        model = random_block_model(rng, max_blocks=2, max_block_dim=3)
        path = random_path(rng, model, num_samples=7, endpoint_flat=True)
        assert aps_index(SuspensionProblem(path=path, grid_size=200)) \
            == sf_crossing(path).value


def test_endpoint_regularize_preserves_index():
    # path with a kernel at the start: regularization shifts it away while
    # keeping the boundary projections
    path = flatten_endpoints(scalar_linear_path(0.0, 1.0), margin=0.15)
    plain = aps_index(SuspensionProblem(path=path, grid_size=128))
    regularized = aps_index(SuspensionProblem(path=path, grid_size=128,
                                              endpoint_regularize=True))
    assert plain == regularized == sf_crossing(path).value


def _expand_adjoint_null(path, v, grid, dim):
    """Map an A_adj null vector from reduced node dofs to ambient node space."""
    from sfcalc.tracemodel import zero_tolerance

    dec0 = eigh(path.eval(0.0))
    dec1 = eigh(path.eval(1.0))
    q_first = dec0.eigenvectors[:, dec0.eigenvalues >= -zero_tolerance(dec0.op_norm)]
    q_last = dec1.eigenvectors[:, dec1.eigenvalues < -zero_tolerance(dec1.op_norm)]
    kf = q_first.shape[1]
    full = np.zeros((grid + 1, dim), dtype=complex)
    full[0] = q_first @ v[:kf]
    full[1:grid] = v[kf: kf + (grid - 1) * dim].reshape(grid - 1, dim)
    full[grid] = q_last @ v[kf + (grid - 1) * dim:]
    return full


def _adjoint_angle(path, grid, dim):
    prob = SuspensionProblem(path=path, grid_size=grid)
    a, adj = assemble(prob)
    ua, sa, _ = np.linalg.svd(a)
    left_null = ua[:, -1]              # cokernel of A (interval space)
    assert sa[-1] > 1e-3 * sa[0]       # tall A: cokernel is structural
    _, _, vj = np.linalg.svd(adj)
    full = _expand_adjoint_null(path, vj[-1].conj(), grid, dim)
    averaged = (0.5 * (full[:-1] + full[1:])).reshape(-1)
    cosine = abs(np.vdot(averaged, left_null)) / (
        np.linalg.norm(averaged) * np.linalg.norm(left_null))
    return math.sqrt(max(0.0, 1.0 - cosine ** 2))


def test_adjoint_consistency_subspace_angle():
    # independently assembled A_adj: its kernel matches the cokernel of A
    # after node-to-interval averaging (summation by parts makes the pairing
    # exact, so the angle sits at roundoff level)
    scalar = flatten_endpoints(scalar_linear_path(1.0, -1.0), margin=0.15,
                               num_samples=41)
    assert _adjoint_angle(scalar, 500, 1) < 1e-6

    model = WeightedBlockModel([(2, 1.0)])
    rng = rng_from_seed(12)
    x = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    wiggle = 0.35 * (x + x.conj().T)
    f0 = np.diag([1.5, 0.8]).astype(complex)
    f1 = np.diag([-1.2, 0.9]).astype(complex)
    us = np.linspace(0.0, 1.0, 9)
    samples = [(float(u), BlockHermitian(
        model, (1 - u) * f0 + u * f1 + np.sin(np.pi * u) * wiggle)) for u in us]
    block_path = flatten_endpoints(OperatorPath(model, samples), num_samples=33)
    assert sf_crossing(block_path).value == -1.0
    assert _adjoint_angle(block_path, 400, 2) < 1e-6


# ---------------------------------------------------------------------------
# half-line inverse

def unit_model():
    return WeightedBlockModel([(1, 1.0)])


def test_halfline_positive_eigenvalue_oracle():
    # g' + g = 1_[0,1], g(0) = 0  =>  g = 1 - e^{-x} on [0, 1]
    d0 = BlockHermitian(unit_model(), [[1.0]])
    grid = 300
    xs = np.linspace(0.0, 3.0, grid + 1)
    f = (xs <= 1.0).astype(complex)
    g = halfline_aps_apply_inverse(d0, f, 3.0, grid)
    oracle = np.where(xs <= 1.0, 1.0 - np.exp(-xs),
                      (1.0 - math.exp(-1.0)) * np.exp(-(xs - 1.0)))
    assert g[0] == 0.0
    assert np.abs(g - oracle).max() < 2.0 * (3.0 / grid)


def test_halfline_zero_rhs():
    d0 = BlockHermitian(unit_model(), [[1.0]])
    g = halfline_aps_apply_inverse(d0, np.zeros(101, dtype=complex), 1.0, 100)
    assert np.abs(g).max() == 0.0


def test_halfline_negative_eigenvalue_oracle():
    # g' - g = 1_[0,1] with the decaying branch: g = -(1 - e^{x-1}) on [0, 1]
    d0 = BlockHermitian(unit_model(), [[-1.0]])
    grid = 300
    xs = np.linspace(0.0, 3.0, grid + 1)
    f = (xs <= 1.0).astype(complex)
    g = halfline_aps_apply_inverse(d0, f, 3.0, grid)
    oracle = np.where(xs <= 1.0, -(1.0 - np.exp(xs - 1.0)), 0.0)
    assert np.abs(g - oracle).max() < 2.0 * (3.0 / grid)


def test_halfline_requires_invertible():
    with pytest.raises(PreconditionError):
        halfline_aps_apply_inverse(unit_model().zero(),
                                   np.zeros(33, dtype=complex), 1.0, 32)


def test_halfline_boundary_condition_and_first_order_residual():
    for seed in range(3):
        rng = rng_from_seed(6600 + seed)
        model = WeightedBlockModel([(2, 1.0)])
        x = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        base = 0.5 * (x + x.conj().T)
        d0 = BlockHermitian(model, base + 3.0 * np.eye(2))
        dec = eigh(d0)
        pos = dec.eigenvectors[:, dec.eigenvalues > 0]
        residuals = []
        for grid in (100, 200, 400):
            xs = np.linspace(0.0, 2.0, grid + 1)
            bump = np.exp(-1.0 / np.clip(xs * (1.6 - xs), 1e-12, None)) \
                * ((xs > 0) & (xs < 1.6))
            f = np.stack([bump, 0.3 * bump], axis=1).astype(complex)
            g = halfline_aps_apply_inverse(d0, f, 2.0, grid)
            assert np.abs(pos.conj().T @ g[0]).max() < 1e-8
            residuals.append(halfline_residual(d0, f, g, 2.0))
        assert residuals[1] < 0.7 * residuals[0]
        assert residuals[2] < 0.7 * residuals[1]


# ---------------------------------------------------------------------------
# perturbation / truncation report

def diagonal_operator(model, values):
    return BlockHermitian(model, np.diag(np.asarray(values, dtype=complex)))


def linear_k_path(model, k1_mat, num=9):
    us = np.linspace(0.0, 1.0, num)
    return OperatorPath(model, [(float(u), BlockHermitian(model, u * k1_mat))
                                for u in us])


def test_perturbation_zero_k_everywhere_invertible():
    model = WeightedBlockModel([(2, 1.0)])
    d = diagonal_operator(model, [1.0, -2.0])
    report = perturbation_truncation_check(
        d, linear_k_path(model, np.zeros((2, 2))), 1.0)
    assert report["minimal_passing_R"] == 1.0
    assert all(entry["passes"] for entry in report["sweep"])


def test_perturbation_well_separated_spectrum_passes_first():
    model = WeightedBlockModel([(2, 1.0), (2, 1.0)])
    d = diagonal_operator(model, [10.0, -10.0, 20.0, -20.0])
    rng = rng_from_seed(8)
    small = np.zeros((4, 4), dtype=complex)
    for sl in model.block_slices:
        x = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        small[sl, sl] = 0.05 * (x + x.conj().T)
    report = perturbation_truncation_check(d, linear_k_path(model, small), 2.0)
    assert report["minimal_passing_R"] == 2.0


def test_perturbation_rank_two_norm_three_sweep():
    # eigenvalues +-1..+-8, rank-2 Hermitian bump of norm 3, R sweep 2,4,8
    model = WeightedBlockModel([(4, 1.0), (4, 1.0)])
    d = diagonal_operator(model, [1.0, -1.0, 2.0, -2.0, 5.0, -5.0, 8.0, -8.0])
    rng = rng_from_seed(77)
    v = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    k1 = np.zeros((8, 8), dtype=complex)
    k1[:4, :4] = v @ v.conj().T
    k1 *= 3.0 / np.linalg.norm(k1, 2)
    report = perturbation_truncation_check(d, linear_k_path(model, k1), 2.0)
    rs = [entry["R"] for entry in report["sweep"]]
    assert rs[:3] == [2.0, 4.0, 8.0]
    assert report["minimal_passing_R"] is not None
    for entry in report["sweep"]:
        if entry["passes"]:
            assert entry["index_matches_flow"]
