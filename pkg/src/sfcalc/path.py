"""One-parameter families of self-adjoint elements.

An :class:`OperatorPath` samples a family u -> F_u on [0, 1] and provides
interpolation, differentiation, concatenation and unitary conjugation.
Samples are either :class:`~sfcalc.tracemodel.BlockHermitian` elements or
frequency-model symbols; interpolation is entrywise (resp. pointwise), so
Hermiticity is preserved by construction.
"""

import numpy as np

from .errors import DomainError, ValidationError
from .tracemodel import (BlockHermitian, FreqSymbol, FrequencyModel,
                         WeightedBlockModel)

__all__ = ["OperatorPath", "concatenate", "conjugate", "reverse",
           "direct_sum", "flatten_endpoints", "reparametrize",
           "smoothstep", "flat_profile"]


def smoothstep(t):
    """C^2 monotone ramp 0 -> 1 on [0, 1] with flat first two derivatives."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def flat_profile(t, margin=0.15):
    """Time warp [0,1] -> [0,1], constant on [0, margin] and [1-margin, 1]."""
    t = np.asarray(t, dtype=float)
    return smoothstep((t - margin) / (1.0 - 2.0 * margin))


class OperatorPath:
    """Sampled path u -> F_u with u_0 = 0 and u_last = 1."""

    def __init__(self, model, samples, interpolation="linear",
                 endpoint_flat=False):
        if interpolation not in ("linear", "cubic"):
            raise ValidationError(f"unknown interpolation {interpolation!r}")
        samples = [(float(u), F) for u, F in samples]
        if len(samples) < 2:
            raise ValidationError("a path needs at least two samples")
        us = np.array([u for u, _ in samples])
        if us[0] != 0.0 or us[-1] != 1.0:
            raise ValidationError("path parameters must start at 0 and end at 1")
        if np.any(np.diff(us) <= 0):
            raise ValidationError("path parameters must be strictly increasing")

        self.model = model
        self.interpolation = interpolation
        self.endpoint_flat = bool(endpoint_flat)
        self.us = us

        if isinstance(model, FrequencyModel):
            if interpolation == "cubic":
                raise ValidationError("frequency paths support linear interpolation only")
            for _, F in samples:
                if not isinstance(F, FreqSymbol):
                    raise ValidationError("frequency-path samples must be symbols")
            self._symbols = [F for _, F in samples]
            self._stack = None
        elif isinstance(model, WeightedBlockModel):
            mats = []
            for _, F in samples:
                if not isinstance(F, BlockHermitian):
                    raise ValidationError("block-path samples must be BlockHermitian")
                if F.model.blocks != model.blocks:
                    raise ValidationError("all samples must live on the path's model")
                mats.append(F.mat)
            self._stack = np.stack(mats)
            self._symbols = None
            if interpolation == "cubic":
                self._tangents = self._cubic_tangents()
        else:
            raise ValidationError("unsupported model type")

        if self.endpoint_flat:
            for i, j, side in ((0, 1, "start"), (-2, -1, "end")):
                if not self._samples_equal(i, j):
                    raise ValidationError(
                        f"endpoint_flat requires identical samples at the {side}")

    # -- basic access -------------------------------------------------------

    @property
    def is_frequency(self):
        return self._symbols is not None

    @property
    def nodes(self):
        return self.us.copy()

    def sample(self, j):
        if self.is_frequency:
            return self._symbols[j]
        return BlockHermitian(self.model, self._stack[j])

    def _samples_equal(self, i, j, tol=1e-12):
        if self.is_frequency:
            probe = np.linspace(-1.0, 1.0, 7) * getattr(self.model, "xi_max", 1.0)
            return np.allclose(self._symbols[i](probe), self._symbols[j](probe),
                               atol=tol, rtol=0.0)
        scale = max(1.0, np.abs(self._stack).max())
        return np.abs(self._stack[i] - self._stack[j]).max() <= tol * scale

    def _segment(self, u):
        """Segment index for u, using the right-derivative convention at nodes."""
        j = int(np.searchsorted(self.us, u, side="right")) - 1
        return min(max(j, 0), len(self.us) - 2)

    def _cubic_tangents(self):
        m = self._stack
        us = self.us
        tangents = np.empty_like(m)
        for j in range(len(us)):
            if j == 0:
                h0, h1 = us[1] - us[0], us[2] - us[1]
                # second-order one-sided difference
                tangents[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * m[0]
                               + (h0 + h1) / (h0 * h1) * m[1]
                               - h0 / (h1 * (h0 + h1)) * m[2])
            elif j == len(us) - 1:
                h0, h1 = us[-2] - us[-3], us[-1] - us[-2]
                tangents[-1] = (h1 / (h0 * (h0 + h1)) * m[-3]
                                - (h0 + h1) / (h0 * h1) * m[-2]
                                + (2 * h1 + h0) / (h1 * (h0 + h1)) * m[-1])
            else:
                ha, hb = us[j] - us[j - 1], us[j + 1] - us[j]
                tangents[j] = (-hb / (ha * (ha + hb)) * m[j - 1]
                               + (hb - ha) / (ha * hb) * m[j]
                               + ha / (hb * (ha + hb)) * m[j + 1])
        return tangents

    # -- evaluation ---------------------------------------------------------

    def eval(self, u):
        u = float(u)
        if not 0.0 <= u <= 1.0:
            raise DomainError(f"path parameter {u} outside [0, 1]")
        j = self._segment(u)
        h = self.us[j + 1] - self.us[j]
        t = (u - self.us[j]) / h
        if self.is_frequency:
            if t == 0.0:
                return self._symbols[j]
            if t == 1.0:
                return self._symbols[j + 1]
            return self._symbols[j].lerp(self._symbols[j + 1], t)
        if self.interpolation == "linear":
            mat = (1.0 - t) * self._stack[j] + t * self._stack[j + 1]
        else:
            p0, p1 = self._stack[j], self._stack[j + 1]
            m0, m1 = self._tangents[j] * h, self._tangents[j + 1] * h
            h00 = 2 * t ** 3 - 3 * t ** 2 + 1
            h10 = t ** 3 - 2 * t ** 2 + t
            h01 = -2 * t ** 3 + 3 * t ** 2
            h11 = t ** 3 - t ** 2
            mat = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
        return BlockHermitian(self.model, mat)

    def derivative(self, u):
        u = float(u)
        if not 0.0 <= u <= 1.0:
            raise DomainError(f"path parameter {u} outside [0, 1]")
        j = self._segment(u)
        h = self.us[j + 1] - self.us[j]
        if self.is_frequency:
            return self._symbols[j].diff_quotient(self._symbols[j + 1], h)
        if self.interpolation == "linear":
            mat = (self._stack[j + 1] - self._stack[j]) / h
        else:
            t = (u - self.us[j]) / h
            p0, p1 = self._stack[j], self._stack[j + 1]
            m0, m1 = self._tangents[j] * h, self._tangents[j + 1] * h
            dh00 = 6 * t ** 2 - 6 * t
            dh10 = 3 * t ** 2 - 4 * t + 1
            dh01 = -6 * t ** 2 + 6 * t
            dh11 = 3 * t ** 2 - 2 * t
            mat = (dh00 * p0 + dh10 * m0 + dh01 * p1 + dh11 * m1) / h
        return BlockHermitian(self.model, 0.5 * (mat + mat.conj().T))

    def with_samples(self, new_samples, endpoint_flat=None):
        return OperatorPath(
            self.model, new_samples, interpolation=self.interpolation,
            endpoint_flat=self.endpoint_flat if endpoint_flat is None else endpoint_flat)

    def max_sample_norm(self):
        if self.is_frequency:
            raise ValidationError("sample norms are not defined for symbol paths")
        return max(float(np.linalg.norm(m, 2)) for m in self._stack)


# ---------------------------------------------------------------------------
# path combinators

def _same_model(ma, mb):
    if ma is mb:
        return True
    if isinstance(ma, WeightedBlockModel) and isinstance(mb, WeightedBlockModel):
        return ma.blocks == mb.blocks
    if isinstance(ma, FrequencyModel) and isinstance(mb, FrequencyModel):
        return ma == mb
    return False


def concatenate(a, b, tol=1e-10):
    """Glue two paths: a on [0, 1/2], b on [1/2, 1]."""
    if not _same_model(a.model, b.model):
        raise ValidationError("concatenate requires a common model")
    end_a, start_b = a.eval(1.0), b.eval(0.0)
    if a.is_frequency != b.is_frequency:
        raise ValidationError("cannot concatenate mixed path kinds")
    if a.is_frequency:
        probe = np.linspace(-1.0, 1.0, 9) * a.model.xi_max
        mismatch = float(np.abs(end_a(probe) - start_b(probe)).max())
        scale = 1.0
    else:
        mismatch = float(np.abs(end_a.mat - start_b.mat).max())
        scale = max(1.0, np.abs(end_a.mat).max())
    if mismatch > tol * scale:
        raise ValidationError(
            f"paths do not match at the splice point (gap {mismatch:.3e})")
    samples = [(u / 2.0, a.sample(j)) for j, u in enumerate(a.us)]
    samples += [(0.5 + u / 2.0, b.sample(j)) for j, u in enumerate(b.us) if u > 0.0]
    flat = a.endpoint_flat and b.endpoint_flat
    return OperatorPath(a.model, samples, interpolation=a.interpolation,
                        endpoint_flat=flat)


def conjugate(path, unitaries, tol=1e-10):
    """Pointwise conjugation u -> U_u F_u U_u^*.

    ``unitaries`` is a single matrix or one matrix per sample node.
    """
    if path.is_frequency:
        raise ValidationError("conjugation is defined for block paths only")
    n = path.model.dim
    if isinstance(unitaries, np.ndarray) and unitaries.ndim == 2:
        mats = [unitaries] * len(path.us)
    else:
        mats = list(unitaries)
        if len(mats) != len(path.us):
            raise ValidationError("need one unitary per path sample")
    eye = np.eye(n)
    samples = []
    for j, u in enumerate(path.us):
        U = np.asarray(mats[j], dtype=complex)
        defect = np.linalg.norm(U.conj().T @ U - eye)
        if defect > tol * np.sqrt(n):
            raise ValidationError(f"sample {j}: matrix is not unitary "
                                  f"(defect {defect:.3e})")
        samples.append((u, BlockHermitian(path.model,
                                          U @ path.sample(j).mat @ U.conj().T)))
    return OperatorPath(path.model, samples, interpolation=path.interpolation,
                        endpoint_flat=False)


def reverse(path):
    """The path u -> F_{1-u}."""
    samples = [(1.0 - u, path.sample(j)) for j, u in enumerate(path.us)]
    samples.reverse()
    return OperatorPath(path.model, samples, interpolation=path.interpolation,
                        endpoint_flat=path.endpoint_flat)


def direct_sum(a, b):
    """Blockwise direct sum of two block paths, resampled on the node union."""
    if a.is_frequency or b.is_frequency:
        raise ValidationError("direct sums are defined for block paths only")
    model = a.model.direct_sum(b.model)
    us = np.union1d(a.us, b.us)
    na, nb = a.model.dim, b.model.dim
    samples = []
    for u in us:
        mat = np.zeros((na + nb, na + nb), dtype=complex)
        mat[:na, :na] = a.eval(u).mat
        mat[na:, na:] = b.eval(u).mat
        samples.append((float(u), BlockHermitian(model, mat)))
    return OperatorPath(model, samples, interpolation="linear",
                        endpoint_flat=a.endpoint_flat and b.endpoint_flat)


def reparametrize(path, phi, num_samples=None):
    """Resample the path along a monotone time change fixing 0 and 1."""
    if num_samples is None:
        num_samples = max(2 * len(path.us) + 1, 17)
    ts = np.linspace(0.0, 1.0, num_samples)
    samples = [(float(t), path.eval(float(np.clip(phi(t), 0.0, 1.0)))) for t in ts]
    return OperatorPath(path.model, samples, interpolation=path.interpolation)


def flatten_endpoints(path, margin=0.15, num_samples=None):
    """Resample along a C^2 warp so the path is constant near u = 0, 1."""
    if num_samples is None:
        num_samples = max(2 * len(path.us) + 1, 33)
    ts = np.linspace(0.0, 1.0, num_samples)
    samples = [(float(t), path.eval(float(flat_profile(t, margin)))) for t in ts]
    return OperatorPath(path.model, samples, interpolation=path.interpolation,
                        endpoint_flat=True)
