"""Seeded builders for models, operators and paths.

Every generator takes an explicit seed or numpy Generator so scenario runs
are reproducible bit for bit.
"""

import numpy as np

from .errors import ValidationError
from .path import OperatorPath, concatenate, flatten_endpoints
from .tracemodel import BlockHermitian, WeightedBlockModel, eigh

__all__ = ["rng_from_seed", "random_block_model", "random_hermitian",
           "random_path", "single_crossing_path", "scalar_linear_path",
           "involution_path", "random_unitary_path"]

WEIGHT_CHOICES = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0)


def rng_from_seed(seed):
    return np.random.default_rng(int(seed))


def random_block_model(rng, max_blocks=3, max_block_dim=4, weights=WEIGHT_CHOICES):
    n_blocks = int(rng.integers(1, max_blocks + 1))
    blocks = []
    for _ in range(n_blocks):
        dim = int(rng.integers(1, max_block_dim + 1))
        blocks.append((dim, float(rng.choice(weights))))
    return WeightedBlockModel(blocks)


def random_hermitian(rng, model, scale=1.0):
    n = model.dim
    mat = np.zeros((n, n), dtype=complex)
    for sl in model.block_slices:
        d = sl.stop - sl.start
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        mat[sl, sl] = scale * 0.5 * (x + x.conj().T) / np.sqrt(d)
    return BlockHermitian(model, mat)


def _push_away_from_zero(op, gap):
    """Shift eigenvalues off the kernel so the operator is gap-invertible."""
    dec = eigh(op)
    lam = dec.eigenvalues
    signs = np.where(lam >= 0, 1.0, -1.0)
    pushed = np.where(np.abs(lam) < gap, signs * gap, lam)
    v = dec.eigenvectors
    return BlockHermitian(op.model, (v * pushed) @ v.conj().T)


def random_path(rng, model, num_samples=9, scale=1.5, wiggle=0.6,
                endpoint_gap=0.15, endpoint_flat=False):
    """Random Hermitian path with invertible endpoints.

    Linear drift between two gap-invertible endpoints plus interior
    Hermitian wiggles that vanish at u = 0, 1.
    """
    f0 = _push_away_from_zero(random_hermitian(rng, model, scale), endpoint_gap)
    f1 = _push_away_from_zero(random_hermitian(rng, model, scale), endpoint_gap)
    bumps = [random_hermitian(rng, model, wiggle) for _ in range(2)]
    us = np.linspace(0.0, 1.0, num_samples)
    samples = []
    for u in us:
        mat = (1.0 - u) * f0.mat + u * f1.mat
        mat = mat + np.sin(np.pi * u) * bumps[0].mat \
            + np.sin(2.0 * np.pi * u) * bumps[1].mat
        samples.append((float(u), BlockHermitian(model, mat)))
    path = OperatorPath(model, samples, interpolation="linear")
    if endpoint_flat:
        path = flatten_endpoints(path, margin=0.15,
                                 num_samples=max(2 * num_samples + 1, 25))
    return path


def scalar_linear_path(start, end, num_samples=9, weight=1.0):
    """Scalar path  u -> (1 - u) start + u end  on a single unit block."""
    model = WeightedBlockModel([(1, weight)])
    us = np.linspace(0.0, 1.0, num_samples)
    samples = [(float(u), BlockHermitian(model, [[(1 - u) * start + u * end]]))
               for u in us]
    return OperatorPath(model, samples, interpolation="linear")


def single_crossing_path(num_samples=9):
    """The path 2u - 1 with a single upward eigenvalue crossing."""
    return scalar_linear_path(-1.0, 1.0, num_samples=num_samples)


def involution_path(model, minus_dims, rng=None, nodes_per_leg=9):
    """Normalization path through the identity involution.

    ``minus_dims[b]`` eigenvalues of block b start at -1 (the rest at +1);
    the first leg runs B_0 + 4 u P^- into the identity, the second leg stays
    there.  The spectral flow equals the weighted trace of P^-.
    """
    if len(minus_dims) != len(model.blocks):
        raise ValidationError("need one minus-dimension per block")
    n = model.dim
    b0 = np.zeros((n, n), dtype=complex)
    pminus = np.zeros((n, n), dtype=complex)
    for (dim, _), sl, k in zip(model.blocks, model.block_slices, minus_dims):
        if not 0 <= k <= dim:
            raise ValidationError("minus-dimension exceeds the block size")
        diag = np.ones(dim)
        diag[:k] = -1.0
        basis = np.eye(dim, dtype=complex)
        if rng is not None:
            x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            basis, _ = np.linalg.qr(x)
        b0[sl, sl] = basis @ np.diag(diag) @ basis.conj().T
        pminus[sl, sl] = basis[:, :k] @ basis[:, :k].conj().T
    model_b0 = BlockHermitian(model, b0)
    model_p = BlockHermitian(model, pminus)

    us = np.linspace(0.0, 1.0, nodes_per_leg)
    leg1 = OperatorPath(model, [
        (float(u), BlockHermitian(model, model_b0.mat + 4.0 * (u / 2.0) * model_p.mat))
        for u in us], interpolation="linear")
    eye = model.identity()
    leg2 = OperatorPath(model, [(float(u), eye) for u in us],
                        interpolation="linear")
    glued = concatenate(leg1, leg2)
    expected = float(sum(w * k for (dim, w), k in zip(model.blocks, minus_dims)))
    return glued, expected


def random_unitary_path(rng, model, num_samples, amplitude=0.7,
                        endpoints_identity=True):
    """Block-diagonal unitary path U_u = exp(i theta(u) H), theta(0) = theta(1) = 0."""
    gen = random_hermitian(rng, model, 1.0)
    dec = eigh(gen)
    us = np.linspace(0.0, 1.0, num_samples)
    mats = []
    for u in us:
        theta = amplitude * np.sin(np.pi * u) if endpoints_identity else amplitude * u
        v = dec.eigenvectors
        mats.append((v * np.exp(1j * theta * dec.eigenvalues)) @ v.conj().T)
    return mats
