"""Traced operator models and their spectral calculus.

Two model families are provided:

* :class:`WeightedBlockModel` -- a finite direct sum of matrix blocks, each
  carrying a positive trace weight.  The weighted trace realizes a finite
  slice of a semifinite trace; non-integer weights produce real-valued
  spectral flow.
* :class:`FrequencyModel` -- a commutative model whose operators are real
  symbol functions of a frequency variable and whose trace integrates the
  symbol against a density.
"""

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import ModelError, NumericError, ValidationError
from .jacobi import jacobi_eigh
from .quadrature import adaptive_gauss_legendre

__all__ = [
    "WeightedBlockModel", "BlockHermitian", "SpectralDecomposition",
    "Interval", "trace", "eigh", "spectral_projection", "apply_function",
    "FrequencyModel", "FreqSymbol", "AffineSymbol", "ConstantSymbol",
    "IndicatorSymbol", "LambdaSymbol", "freq_trace", "zero_tolerance",
    "ClusterBoundaryWarning",
]

HERMITIAN_RTOL = 1e-12
ZERO_CLUSTER_FACTOR = 1e-9


def zero_tolerance(op_norm):
    """Eigenvalue magnitude below which a mode counts as kernel."""
    return ZERO_CLUSTER_FACTOR * (1.0 + float(op_norm))


class ClusterBoundaryWarning(UserWarning):
    """An interval endpoint fell inside a near-degenerate eigenvalue cluster."""


# ---------------------------------------------------------------------------
# intervals

@dataclass(frozen=True)
class Interval:
    """Real interval with open/closed endpoint flags."""

    lo: float = -math.inf
    hi: float = math.inf
    closed_lo: bool = True
    closed_hi: bool = True

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError(f"empty interval: lo={self.lo} > hi={self.hi}")

    def contains(self, values):
        v = np.asarray(values, dtype=float)
        lo_ok = (v >= self.lo) if self.closed_lo else (v > self.lo)
        hi_ok = (v <= self.hi) if self.closed_hi else (v < self.hi)
        return lo_ok & hi_ok

    @staticmethod
    def nonnegative():
        return Interval(0.0, math.inf, closed_lo=True, closed_hi=False)

    @staticmethod
    def negative():
        return Interval(-math.inf, 0.0, closed_lo=False, closed_hi=False)

    @staticmethod
    def symmetric(radius):
        return Interval(-float(radius), float(radius))


# ---------------------------------------------------------------------------
# weighted block model

@dataclass(frozen=True, eq=False)
class WeightedBlockModel:
    """Ordered block structure ``[(dim, weight), ...]`` with weighted trace."""

    blocks: tuple

    def __init__(self, blocks):
        blocks = tuple((int(n), float(w)) for n, w in blocks)
        if not blocks:
            raise ValidationError("model needs at least one block")
        for n, w in blocks:
            if n < 1:
                raise ValidationError(f"block dimension {n} < 1")
            if not (w > 0.0 and math.isfinite(w)):
                raise ValidationError(f"block weight {w} must be positive finite")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self):
        return sum(n for n, _ in self.blocks)

    @property
    def block_slices(self):
        slices = []
        start = 0
        for n, _ in self.blocks:
            slices.append(slice(start, start + n))
            start += n
        return slices

    @property
    def weight_vector(self):
        return np.concatenate([np.full(n, w) for n, w in self.blocks])

    @property
    def trace_identity(self):
        return float(sum(n * w for n, w in self.blocks))

    def identity(self):
        return BlockHermitian(self, np.eye(self.dim, dtype=complex))

    def zero(self):
        return BlockHermitian(self, np.zeros((self.dim, self.dim), dtype=complex))

    def hermitian(self, mat):
        return BlockHermitian(self, mat)

    def direct_sum(self, other):
        return WeightedBlockModel(self.blocks + other.blocks)

    def lattice_step(self):
        """Common rational step of the weights, or None.

        Returns q such that every block weight is an integer multiple of q,
        provided all weights are (numerically) rational with small
        denominator.  Spectral flow values on this model live on the
        q-lattice.
        """
        fracs = []
        for _, w in self.blocks:
            f = Fraction(w).limit_denominator(10 ** 4)
            if abs(float(f) - w) > 1e-12 * max(1.0, w):
                return None
            fracs.append(f)
        q = fracs[0]
        for f in fracs[1:]:
            q = Fraction(math.gcd(q.numerator * f.denominator,
                                  f.numerator * q.denominator),
                         q.denominator * f.denominator)
        return float(q)

    def __repr__(self):
        return f"WeightedBlockModel({list(self.blocks)})"


@dataclass(frozen=True, eq=False)
class BlockHermitian:
    """Hermitian block-diagonal element of a :class:`WeightedBlockModel`."""

    model: WeightedBlockModel
    mat: np.ndarray = field(repr=False)

    def __init__(self, model, mat):
        mat = np.asarray(mat, dtype=complex)
        n = model.dim
        if mat.shape != (n, n):
            raise ValidationError(
                f"matrix shape {mat.shape} does not match model dimension {n}")
        scale = np.linalg.norm(mat)
        gap = np.linalg.norm(mat - mat.conj().T)
        if gap > HERMITIAN_RTOL * max(1.0, scale):
            raise ValidationError(
                f"matrix is not Hermitian: relative defect {gap / max(1.0, scale):.3e}")
        off = mat.copy()
        for sl in model.block_slices:
            off[sl, sl] = 0.0
        off_norm = np.linalg.norm(off)
        if off_norm > HERMITIAN_RTOL * max(1.0, scale):
            raise ValidationError(
                f"off-block entries must vanish (norm {off_norm:.3e})")
        clean = mat - off
        clean = 0.5 * (clean + clean.conj().T)
        clean.setflags(write=False)
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "mat", clean)

    def block(self, i):
        sl = self.model.block_slices[i]
        return self.mat[sl, sl]

    def __add__(self, other):
        self._check_model(other)
        return BlockHermitian(self.model, self.mat + other.mat)

    def __sub__(self, other):
        self._check_model(other)
        return BlockHermitian(self.model, self.mat - other.mat)

    def __mul__(self, scalar):
        return BlockHermitian(self.model, self.mat * float(scalar))

    __rmul__ = __mul__

    def _check_model(self, other):
        if other.model is not self.model and other.model.blocks != self.model.blocks:
            raise ValidationError("operands live on different models")


def trace(op):
    """Weighted trace  sum_b w_b * Tr(op_b)."""
    if not isinstance(op, BlockHermitian):
        raise ValidationError("trace expects a BlockHermitian")
    total = 0.0
    for (n, w), sl in zip(op.model.blocks, op.model.block_slices):
        total += w * float(np.trace(op.mat[sl, sl]).real)
    return total


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues, unitary eigenvector columns and per-eigenvalue weights.

    Eigenvalues are ascending; each eigenvector is supported in exactly one
    block and carries that block's trace weight.
    """

    model: WeightedBlockModel
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weights: np.ndarray
    block_index: np.ndarray

    @property
    def op_norm(self):
        if self.eigenvalues.size == 0:
            return 0.0
        return float(np.max(np.abs(self.eigenvalues)))

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def weighted_count(self, mask):
        return float(np.sum(self.weights[np.asarray(mask, dtype=bool)]))

    def kernel_mask(self, tol=None):
        if tol is None:
            tol = zero_tolerance(self.op_norm)
        return np.abs(self.eigenvalues) <= tol

    def clusters(self, tol=None):
        """Indices grouped into near-degenerate clusters."""
        if tol is None:
            tol = zero_tolerance(self.op_norm)
        groups = []
        current = [0]
        lam = self.eigenvalues
        for k in range(1, lam.size):
            if lam[k] - lam[k - 1] <= tol:
                current.append(k)
            else:
                groups.append(current)
                current = [k]
        groups.append(current)
        return groups


def _canonical_phases(vecs):
    """Rotate each column so its largest-modulus entry is real positive."""
    out = np.array(vecs, dtype=complex)
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = int(np.argmax(np.abs(col)))
        pivot = col[idx]
        if abs(pivot) > 0:
            out[:, k] = col * (np.conj(pivot) / abs(pivot))
    return out


def eigh(op, backend="lapack"):
    """Blockwise Hermitian eigendecomposition.

    ``backend`` is ``"lapack"`` (default) or ``"jacobi"`` (in-tree cyclic
    Jacobi sweeps).  Both are deterministic for identical input; degenerate
    subspaces are canonicalized by a fixed phase convention.
    """
    if not isinstance(op, BlockHermitian):
        raise ValidationError("eigh expects a BlockHermitian")
    model = op.model
    n = model.dim
    all_vals = np.empty(n)
    all_vecs = np.zeros((n, n), dtype=complex)
    all_weights = np.empty(n)
    all_block = np.empty(n, dtype=int)
    pos = 0
    for b, ((nb, w), sl) in enumerate(zip(model.blocks, model.block_slices)):
        block = op.mat[sl, sl]
        if backend == "jacobi":
            vals, vecs = jacobi_eigh(block)
        elif backend == "lapack":
            vals, vecs = np.linalg.eigh(block)
        else:
            raise ValidationError(f"unknown eigh backend {backend!r}")
        all_vals[pos:pos + nb] = vals
        all_vecs[sl, pos:pos + nb] = vecs
        all_weights[pos:pos + nb] = w
        all_block[pos:pos + nb] = b
        pos += nb
    order = np.argsort(all_vals, kind="stable")
    dec = SpectralDecomposition(
        model=model,
        eigenvalues=all_vals[order],
        eigenvectors=_canonical_phases(all_vecs[:, order]),
        weights=all_weights[order],
        block_index=all_block[order],
    )
    residual = np.linalg.norm(dec.reconstruct() - op.mat)
    scale = max(1.0, np.linalg.norm(op.mat))
    if residual > 1e-10 * scale:
        raise NumericError(
            f"eigendecomposition reconstruction residual {residual / scale:.3e}")
    return dec


def spectral_projection(dec, interval):
    """Orthogonal projection onto eigenvectors with eigenvalue in ``interval``.

    Warns when an interval endpoint falls strictly inside a near-degenerate
    cluster, since the selection is then tolerance-sensitive.
    """
    if not isinstance(dec, SpectralDecomposition):
        raise ValidationError("spectral_projection expects a SpectralDecomposition")
    if dec.eigenvalues.size == 0:
        raise ValidationError("empty model")
    tol = zero_tolerance(dec.op_norm)
    lam = dec.eigenvalues
    for endpoint in (interval.lo, interval.hi):
        if math.isfinite(endpoint):
            close = np.abs(lam - endpoint) <= tol
            if close.any() and (lam[close].max() - lam[close].min()) > 0:
                warnings.warn(
                    f"interval endpoint {endpoint} lies inside an eigenvalue "
                    f"cluster of width {lam[close].max() - lam[close].min():.3e}",
                    ClusterBoundaryWarning, stacklevel=2)
    mask = interval.contains(lam)
    v = dec.eigenvectors[:, mask]
    proj = v @ v.conj().T
    return BlockHermitian(dec.model, proj)


def apply_function(dec, f):
    """Functional calculus  V diag(f(lambda)) V*."""
    if not isinstance(dec, SpectralDecomposition):
        raise ValidationError("apply_function expects a SpectralDecomposition")
    fvals = np.asarray(f(dec.eigenvalues), dtype=float)
    if not np.all(np.isfinite(fvals)):
        raise NumericError("function value not finite on the spectrum")
    v = dec.eigenvectors
    out = (v * fvals) @ v.conj().T
    return BlockHermitian(dec.model, out)


# ---------------------------------------------------------------------------
# frequency model

class FreqSymbol:
    """Real-valued symbol d(xi); operators of the frequency model."""

    def __call__(self, xi):  # pragma: no cover - interface
        raise NotImplementedError

    def breakpoints(self):
        """Frequencies where the symbol (or its sign) is non-smooth."""
        return ()

    def lerp(self, other, t):
        t = float(t)
        return LambdaSymbol(
            lambda xi, a=self, b=other, t=t: (1 - t) * a(xi) + t * b(xi),
            breakpoints=tuple(self.breakpoints()) + tuple(other.breakpoints()))

    def diff_quotient(self, other, dt):
        dt = float(dt)
        return LambdaSymbol(
            lambda xi, a=self, b=other, dt=dt: (b(xi) - a(xi)) / dt,
            breakpoints=tuple(self.breakpoints()) + tuple(other.breakpoints()))


@dataclass(frozen=True)
class AffineSymbol(FreqSymbol):
    """Symbol xi * slope + offset."""

    offset: float
    slope: float = 1.0

    def __call__(self, xi):
        return self.slope * np.asarray(xi, dtype=float) + self.offset

    def root(self):
        if self.slope == 0.0:
            return None
        return -self.offset / self.slope

    def breakpoints(self):
        r = self.root()
        return () if r is None else (r,)

    def lerp(self, other, t):
        if isinstance(other, AffineSymbol):
            t = float(t)
            return AffineSymbol(offset=(1 - t) * self.offset + t * other.offset,
                                slope=(1 - t) * self.slope + t * other.slope)
        return super().lerp(other, t)

    def diff_quotient(self, other, dt):
        if isinstance(other, AffineSymbol):
            return AffineSymbol(offset=(other.offset - self.offset) / dt,
                                slope=(other.slope - self.slope) / dt)
        return super().diff_quotient(other, dt)


@dataclass(frozen=True)
class ConstantSymbol(FreqSymbol):
    value: float

    def __call__(self, xi):
        return np.full_like(np.asarray(xi, dtype=float), self.value)


@dataclass(frozen=True)
class IndicatorSymbol(FreqSymbol):
    """Indicator of [lo, hi]."""

    lo: float
    hi: float

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        return ((xi >= self.lo) & (xi <= self.hi)).astype(float)

    def breakpoints(self):
        return (self.lo, self.hi)


class LambdaSymbol(FreqSymbol):
    def __init__(self, fn, breakpoints=()):
        self._fn = fn
        self._breakpoints = tuple(breakpoints)

    def __call__(self, xi):
        return np.asarray(self._fn(np.asarray(xi, dtype=float)), dtype=float)

    def breakpoints(self):
        return self._breakpoints


@dataclass(frozen=True)
class FrequencyModel:
    """Multiplication-operator model with trace  integral of symbol * rho.

    ``rho`` is the spectral density (callable or constant), integrable over
    the working window [-xi_max, xi_max].
    """

    rho: object = 1.0 / (2.0 * math.pi)
    xi_max: float = 50.0

    def __post_init__(self):
        if not self.xi_max > 0:
            raise ValidationError("xi_max must be positive")

    def rho_values(self, xi):
        xi = np.asarray(xi, dtype=float)
        if callable(self.rho):
            vals = np.asarray(self.rho(xi), dtype=float)
        else:
            vals = np.full_like(xi, float(self.rho))
        if np.any(vals < -1e-15):
            raise ValidationError("density must be nonnegative")
        return np.clip(vals, 0.0, None)


def _hint_edges(model, support_hint):
    if support_hint is None:
        return [-model.xi_max, model.xi_max]
    edges = sorted(float(x) for x in np.atleast_1d(np.asarray(support_hint, dtype=float)))
    if len(edges) == 1:
        edges = [edges[0], edges[0]]
    lo = max(edges[0], -model.xi_max)
    hi = min(edges[-1], model.xi_max)
    if hi <= lo:
        return [lo, lo]
    interior = [x for x in edges[1:-1] if lo < x < hi]
    return [lo] + interior + [hi]


def freq_trace(model, symbol, support_hint=None, abs_tol=1e-10):
    """Trace of a symbol:  integral of symbol(xi) * rho(xi) over the hint.

    ``support_hint`` is an interval (2 numbers) or a sorted breakpoint list;
    its interior points declare discontinuity loci so quadrature panels can
    split there.  Symbol-declared breakpoints are merged in automatically.
    """
    if not isinstance(model, FrequencyModel):
        raise ModelError("freq_trace expects a FrequencyModel")
    edges = _hint_edges(model, support_hint)
    lo, hi = edges[0], edges[-1]
    if hi <= lo:
        return 0.0
    cuts = set(edges[1:-1])
    if isinstance(symbol, FreqSymbol):
        cuts.update(p for p in symbol.breakpoints() if lo < p < hi)
        fn = symbol
    else:
        fn = symbol

    def integrand(xi):
        return np.asarray(fn(xi), dtype=float) * model.rho_values(xi)

    value, _, _ = adaptive_gauss_legendre(
        integrand, lo, hi, abs_tol=abs_tol, breakpoints=sorted(cuts))
    return value
