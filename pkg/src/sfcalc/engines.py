"""Spectral flow engines and auxiliary spectral invariants.

Four independent methods compute the spectral flow of a path of self-adjoint
elements:

* ``sf_crossing``  -- weighted bookkeeping of eigenvalues through 0,
* ``sf_phillips``  -- summed relative index of positive spectral projections,
* ``sf_integral``  -- heat-kernel integral formula with truncated eta and
  kernel corrections,
* ``sf_appendix``  -- cutoff-function formula for paths of norm at most 1.

All engines share the convention that eigenvalue 0 belongs to the
nonnegative side, applied through the common kernel-cluster tolerance.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DomainError, ModelError, NumericError, PreconditionError,
                     ValidationError)
from .quadrature import adaptive_gauss_legendre
from .tracemodel import (BlockHermitian, FrequencyModel, FreqSymbol,
                         SpectralDecomposition, WeightedBlockModel, eigh,
                         trace, zero_tolerance)

__all__ = ["ChiProfile", "sine_profile", "quintic_profile", "CHI_PROFILES",
           "SpectralFlowResult", "sf_crossing", "sf_phillips",
           "eta_truncated", "sf_integral", "sf_appendix", "cg_bound"]


# ---------------------------------------------------------------------------
# cutoff profiles for the appendix formula

def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def _dsmoothstep(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    out = np.zeros_like(t)
    ti = t[inside]
    out[inside] = 30.0 * ti ** 2 * (1.0 - ti) ** 2
    return out


@dataclass(frozen=True)
class ChiProfile:
    """Admissible odd cutoff: chi(1) = 1, chi'(0) > 0, nondecreasing on
    [-1, 1], compactly supported in [-radius, radius], C^2 up to a sampled
    finite-difference check."""

    name: str
    chi: object = field(repr=False)
    dchi: object = field(repr=False)
    radius: float = 3.0

    def __post_init__(self):
        xs = np.linspace(0.0, self.radius + 0.25, 801)
        odd_gap = np.abs(self.chi(xs) + self.chi(-xs)).max()
        if odd_gap > 1e-12:
            raise ValidationError(f"profile {self.name!r} is not odd ({odd_gap:.3e})")
        if abs(float(self.chi(np.array([1.0]))[0]) - 1.0) > 1e-12:
            raise ValidationError(f"profile {self.name!r} must satisfy chi(1) = 1")
        if float(self.dchi(np.array([0.0]))[0]) <= 0.0:
            raise ValidationError(f"profile {self.name!r} needs chi'(0) > 0")
        core = np.linspace(-1.0, 1.0, 801)
        if np.any(np.diff(self.chi(core)) < -1e-12):
            raise ValidationError(f"profile {self.name!r} must be nondecreasing on [-1, 1]")
        tail = np.linspace(self.radius, 2 * self.radius, 64)
        if np.abs(self.chi(tail)).max() > 1e-12:
            raise ValidationError(f"profile {self.name!r} is not supported in "
                                  f"[-{self.radius}, {self.radius}]")
        delta = 1e-6
        probe = np.linspace(-self.radius - 0.1, self.radius + 0.1, 1201)
        fd = (self.chi(probe + delta) - self.chi(probe - delta)) / (2 * delta)
        if np.abs(fd - self.dchi(probe)).max() > 1e-6:
            raise ValidationError(f"profile {self.name!r}: chi' disagrees with "
                                  "finite differences of chi")

    def __call__(self, x):
        return self.chi(np.asarray(x, dtype=float))

    def deriv(self, x):
        return self.dchi(np.asarray(x, dtype=float))


def _with_plateau_tail(core, dcore):
    """Extend an odd core on [-1, 1] by a plateau to 1.5 and a C^2 tail to 3."""

    def chi(x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        sgn = np.sign(x)
        out = np.where(ax <= 1.0, core(np.clip(x, -1.0, 1.0)), sgn)
        tail = ax > 1.5
        out = np.where(tail, sgn * (1.0 - _smoothstep((ax - 1.5) / 1.5)), out)
        return np.where(ax >= 3.0, 0.0, out)

    def dchi(x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        out = np.where(ax <= 1.0, dcore(np.clip(x, -1.0, 1.0)), 0.0)
        tail = (ax > 1.5) & (ax < 3.0)
        out = np.where(tail, -_dsmoothstep((ax - 1.5) / 1.5) / 1.5, out)
        return np.where(ax >= 3.0, 0.0, out)

    return chi, dchi


def sine_profile():
    chi, dchi = _with_plateau_tail(
        lambda x: np.sin(0.5 * np.pi * x),
        lambda x: 0.5 * np.pi * np.cos(0.5 * np.pi * x))
    return ChiProfile(name="sine", chi=chi, dchi=dchi, radius=3.0)


def quintic_profile():
    chi, dchi = _with_plateau_tail(
        lambda x: x * (15.0 - 10.0 * x ** 2 + 3.0 * x ** 4) / 8.0,
        lambda x: 15.0 * (1.0 - x ** 2) ** 2 / 8.0)
    return ChiProfile(name="quintic", chi=chi, dchi=dchi, radius=3.0)


CHI_PROFILES = {"sine": sine_profile, "quintic": quintic_profile}


# ---------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class SpectralFlowResult:
    """Engine output: the flow value plus solver diagnostics.

    For weighted block models whose weights share a rational step q, the raw
    value is snapped to the q-lattice (it must land within q/4 of it); the
    pre-rounding value is kept in ``diagnostics["raw"]``.
    """

    value: float
    method: str
    diagnostics: dict

    @property
    def raw(self):
        return self.diagnostics.get("raw", self.value)


def _finalize(raw, method, model, diagnostics):
    diagnostics = dict(diagnostics)
    diagnostics["raw"] = float(raw)
    value = float(raw)
    if isinstance(model, WeightedBlockModel):
        step = model.lattice_step()
        if step is not None:
            snapped = step * round(raw / step)
            if abs(raw - snapped) > 0.25 * step:
                raise NumericError(
                    f"{method}: value {raw!r} is {abs(raw - snapped):.3e} away "
                    f"from the weight lattice (step {step})", partial=raw)
            value = snapped
            diagnostics["lattice_step"] = step
    return SpectralFlowResult(value=value, method=method, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# shared helpers

def _nonneg_weight(dec):
    """Weighted count of eigenvalues on the nonnegative side (kernel included)."""
    return dec.weighted_count(dec.eigenvalues >= -zero_tolerance(dec.op_norm))


def _kernel_weight(dec):
    return dec.weighted_count(dec.kernel_mask())


def _min_abs_eig(dec):
    return float(np.min(np.abs(dec.eigenvalues)))


def _op_norm(op):
    return float(np.linalg.norm(op.mat, 2))


def _refine_block_partition(path, window, max_depth):
    """Bisect sample intervals until each step's operator motion < window.

    The operator-norm step bounds the eigenvalue motion (Weyl), so no
    eigenvalue can jump past the window unseen.
    """
    us = list(path.us)
    depth = 0
    while True:
        ops = [path.eval(u) for u in us]
        motions = [_op_norm(BlockHermitian(path.model, ops[j + 1].mat - ops[j].mat))
                   for j in range(len(us) - 1)]
        bad = [j for j, m in enumerate(motions) if m >= window]
        if not bad:
            return us, ops, motions, depth
        depth += 1
        if depth > max_depth:
            raise NumericError(
                f"partition refinement exceeded {max_depth} bisections "
                f"(max step motion {max(motions):.3e} vs window {window})")
        for j in reversed(bad):
            us.insert(j + 1, 0.5 * (us[j] + us[j + 1]))


def _symbol_roots(path, us):
    roots = []
    for u in us:
        sym = path.eval(u)
        roots.extend(sym.breakpoints())
    return roots


# ---------------------------------------------------------------------------
# crossing engine

def sf_crossing(path, window=0.5, max_depth=20):
    """Net weighted flow of eigenvalues through 0.

    The partition is refined until every step moves the operator by less
    than ``window``; per-step nonnegative-count differences are then summed
    (they telescope to the endpoint difference for finite models).
    Eigenvalue 0 counts as nonnegative.
    """
    if path.is_frequency:
        raise ModelError("sf_crossing is defined on weighted block models")
    if not window > 0:
        raise DomainError("window must be positive")
    us, ops, motions, depth = _refine_block_partition(path, window, max_depth)
    decs = [eigh(op) for op in ops]
    counts = [_nonneg_weight(d) for d in decs]
    steps = [counts[j + 1] - counts[j] for j in range(len(counts) - 1)]
    raw = math.fsum(steps)
    diagnostics = {
        "refinement_depth": float(depth),
        "num_steps": float(len(steps)),
        "max_step_motion": float(max(motions)) if motions else 0.0,
        "min_endpoint_gap": min(_min_abs_eig(decs[0]), _min_abs_eig(decs[-1])),
        "window": float(window),
    }
    return _finalize(raw, "crossing", path.model, diagnostics)


# ---------------------------------------------------------------------------
# Phillips engine

def _essential_projection_gap(path):
    """Norm of consecutive projection differences modulo the trace ideal.

    For both desk-scale models every difference of positive spectral
    projections along the path lies in the ideal generated by finite-trace
    elements (finite total trace for block models; compactly supported
    symbol for the frequency model), so the essential gap vanishes.
    """
    return 0.0


def _nonneg_projection(dec):
    """Projection onto the nonnegative side, zero cluster included."""
    mask = dec.eigenvalues >= -zero_tolerance(dec.op_norm)
    v = dec.eigenvectors[:, mask]
    return BlockHermitian(dec.model, v @ v.conj().T)


def _ec_block(dec_p, dec_q, model):
    p = _nonneg_projection(dec_p)
    q = _nonneg_projection(dec_q)
    eye = np.eye(model.dim)
    q_not_p = BlockHermitian(model, q.mat @ (eye - p.mat) @ q.mat)
    p_not_q = BlockHermitian(model, p.mat @ (eye - q.mat) @ p.mat)
    return trace(q_not_p) - trace(p_not_q)


def _ec_frequency(sym_p, sym_q, model, abs_tol):
    cuts = sorted(set(sym_p.breakpoints()) | set(sym_q.breakpoints()))

    def integrand(xi):
        p = (np.asarray(sym_p(xi)) >= 0.0).astype(float)
        q = (np.asarray(sym_q(xi)) >= 0.0).astype(float)
        return q * (1.0 - p) - p * (1.0 - q)

    value, err, _ = adaptive_gauss_legendre(
        lambda xi: integrand(xi) * model.rho_values(xi),
        -model.xi_max, model.xi_max, abs_tol=abs_tol, breakpoints=cuts)
    if not math.isfinite(value):
        raise ModelError("relative-index summand is not integrable")
    return value, err


def sf_phillips(path, max_depth=20, abs_tol=1e-10):
    """Spectral flow as a sum of relative indices of positive projections.

    Consecutive projections must be close modulo the finite-trace ideal
    (trivially so for both supported models); ec(P, Q) = tr(Q(1-P)) -
    tr(P(1-Q)) is then summed over the partition.
    """
    us = list(path.us)
    gap = _essential_projection_gap(path)
    depth = 0
    while gap > 0.5:  # pragma: no cover - unreachable for supported models
        depth += 1
        if depth > max_depth:
            raise NumericError("projection partition did not refine below 1/2")
        us = sorted(us + [0.5 * (a + b) for a, b in zip(us[:-1], us[1:])])
        gap = _essential_projection_gap(path)

    diagnostics = {"refinement_depth": float(depth),
                   "num_steps": float(len(us) - 1),
                   "essential_gap": gap}
    if path.is_frequency:
        total = 0.0
        err_total = 0.0
        syms = [path.eval(u) for u in us]
        for j in range(len(us) - 1):
            val, err = _ec_frequency(syms[j], syms[j + 1], path.model, abs_tol)
            total += val
            err_total += err
        diagnostics["quadrature_error"] = err_total
        return _finalize(total, "phillips", path.model, diagnostics)

    decs = [eigh(path.eval(u)) for u in us]
    total = math.fsum(_ec_block(decs[j], decs[j + 1], path.model)
                      for j in range(len(us) - 1))
    diagnostics["min_endpoint_gap"] = min(_min_abs_eig(decs[0]),
                                          _min_abs_eig(decs[-1]))
    return _finalize(total, "phillips", path.model, diagnostics)


# ---------------------------------------------------------------------------
# truncated eta and the integral engine

def _erfc_array(x):
    return np.array([math.erfc(v) for v in np.atleast_1d(x)])


def eta_truncated(op, s, model=None):
    """Truncated eta invariant: per eigenvalue sign(l) * erfc(sqrt(s) |l|).

    This is the closed form of (1/sqrt(pi)) * integral_s^inf of the
    weighted trace of D exp(-t D^2) dt / sqrt(t); kernel modes do not
    contribute.  Frequency-model symbols are integrated against the density.
    """
    if not s > 0:
        raise DomainError("eta_truncated requires s > 0")
    rs = math.sqrt(s)
    if isinstance(op, FreqSymbol):
        if not isinstance(model, FrequencyModel):
            raise ModelError("symbol eta needs the frequency model")
        def integrand(xi):
            d = np.asarray(op(xi), dtype=float)
            return np.sign(d) * _erfc_array(rs * np.abs(d)) * model.rho_values(xi)
        value, _, _ = adaptive_gauss_legendre(
            integrand, -model.xi_max, model.xi_max, abs_tol=1e-10,
            breakpoints=sorted(op.breakpoints()))
        return value
    dec = op if isinstance(op, SpectralDecomposition) else eigh(op)
    lam = dec.eigenvalues
    tol = zero_tolerance(dec.op_norm)
    signs = np.where(np.abs(lam) <= tol, 0.0, np.sign(lam))
    return float(np.sum(dec.weights * signs * _erfc_array(rs * np.abs(lam))))


def _heat_derivative_trace_block(path, u, s):
    dec = eigh(path.eval(u))
    dmat = path.derivative(u).mat
    v = dec.eigenvectors
    diag = np.einsum("ji,jk,ki->i", v.conj(), dmat, v).real
    return float(np.sum(dec.weights * np.exp(-s * dec.eigenvalues ** 2) * diag))


def _heat_derivative_trace_frequency(path, u, s, model):
    sym = path.eval(u)
    dsym = path.derivative(u)

    def integrand(xi):
        return (np.asarray(dsym(xi), dtype=float)
                * np.exp(-s * np.asarray(sym(xi), dtype=float) ** 2)
                * model.rho_values(xi))

    value, _, _ = adaptive_gauss_legendre(
        integrand, -model.xi_max, model.xi_max, abs_tol=1e-11,
        breakpoints=sorted(set(sym.breakpoints()) | set(dsym.breakpoints())))
    return value


def sf_integral(path, s, quad_tol=1e-8, max_panels=2 ** 14):
    """Heat-kernel integral formula for the spectral flow.

    Five terms: sqrt(s/pi) times the u-integral of the weighted trace of
    (dF/du) exp(-s F^2), half the truncated eta invariants of the endpoints,
    and half the weighted kernel traces of the endpoints.  The value is
    independent of s; the quadrature error estimate lands in diagnostics.
    """
    if not s > 0:
        raise DomainError("sf_integral requires s > 0")
    model = path.model
    prefactor = math.sqrt(s / math.pi)
    nodes = [float(u) for u in path.us[1:-1]]

    if path.is_frequency:
        def g(u_arr):
            return np.array([_heat_derivative_trace_frequency(path, float(u), s, model)
                             for u in np.atleast_1d(u_arr)])
        integral, quad_err, panels = adaptive_gauss_legendre(
            g, 0.0, 1.0, abs_tol=quad_tol, max_panels=max_panels,
            breakpoints=nodes)
        integral *= prefactor
        quad_err *= prefactor
        eta1 = eta_truncated(path.eval(1.0), s, model=model)
        eta0 = eta_truncated(path.eval(0.0), s, model=model)
        ker1 = ker0 = 0.0  # symbols vanish on measure-zero sets only
    else:
        def g(u_arr):
            return np.array([_heat_derivative_trace_block(path, float(u), s)
                             for u in np.atleast_1d(u_arr)])
        try:
            integral, quad_err, panels = adaptive_gauss_legendre(
                g, 0.0, 1.0, abs_tol=quad_tol, max_panels=max_panels,
                breakpoints=nodes)
        except NumericError as exc:
            raise NumericError(
                f"sf_integral: u-quadrature failed ({exc})",
                partial=exc.partial) from exc
        integral *= prefactor
        quad_err *= prefactor
        dec0 = eigh(path.eval(0.0))
        dec1 = eigh(path.eval(1.0))
        eta1 = eta_truncated(dec1, s)
        eta0 = eta_truncated(dec0, s)
        ker1 = _kernel_weight(dec1)
        ker0 = _kernel_weight(dec0)

    raw = integral + 0.5 * (eta1 - eta0) + 0.5 * (ker1 - ker0)
    diagnostics = {
        "s": float(s),
        "integral_term": integral,
        "eta_term": 0.5 * (eta1 - eta0),
        "kernel_term": 0.5 * (ker1 - ker0),
        "eta_end": eta1, "eta_start": eta0,
        "kernel_end": ker1, "kernel_start": ker0,
        "quadrature_error": quad_err,
        "quadrature_panels": float(panels),
    }
    return _finalize(raw, "integral", model, diagnostics)


# ---------------------------------------------------------------------------
# appendix engine

def sf_appendix(path, chi, rescale=False, quad_tol=1e-9, max_panels=2 ** 14,
                min_endpoint_gap=1e-8):
    """Cutoff-function formula for paths of norm at most 1.

    Computes half the u-integral of the weighted trace of (dF/du) chi'(F)
    plus the endpoint corrections  1/2 tr(2P - 1 - chi(F))  with P the
    nonnegative spectral projection.  ``rescale`` divides the whole path by
    its maximal sample norm first (the flow is invariant under positive
    scaling).  Endpoints must be invertible beyond ``min_endpoint_gap``;
    scenarios with a constant-dimensional endpoint kernel may pass 0.
    """
    if path.is_frequency:
        raise ModelError("sf_appendix is defined on weighted block models")
    if not isinstance(chi, ChiProfile):
        raise ValidationError("sf_appendix needs a ChiProfile")
    model = path.model
    max_norm = path.max_sample_norm()
    scale = 1.0
    if max_norm > 1.0 + 1e-12:
        if not rescale:
            raise PreconditionError(
                f"path norm {max_norm:.3f} exceeds 1; pass rescale=True")
        scale = max_norm
        path = path.with_samples(
            [(u, (1.0 / scale) * path.sample(j)) for j, u in enumerate(path.us)])

    dec0 = eigh(path.eval(0.0))
    dec1 = eigh(path.eval(1.0))
    gap = min(_min_abs_eig(dec0), _min_abs_eig(dec1))
    if gap <= min_endpoint_gap:
        raise PreconditionError(
            f"endpoint gap {gap:.3e} at or below {min_endpoint_gap:.1e}")

    def g(u_arr):
        out = []
        for u in np.atleast_1d(u_arr):
            dec = eigh(path.eval(float(u)))
            dmat = path.derivative(float(u)).mat
            v = dec.eigenvectors
            diag = np.einsum("ji,jk,ki->i", v.conj(), dmat, v).real
            out.append(float(np.sum(dec.weights * chi.deriv(dec.eigenvalues) * diag)))
        return np.array(out)

    integral, quad_err, panels = adaptive_gauss_legendre(
        g, 0.0, 1.0, abs_tol=quad_tol, max_panels=max_panels,
        breakpoints=[float(u) for u in path.us[1:-1]])

    def endpoint_term(dec):
        lam = dec.eigenvalues
        tol = zero_tolerance(dec.op_norm)
        p = (lam >= -tol).astype(float)
        return float(np.sum(dec.weights * (2.0 * p - 1.0 - chi(lam))))

    raw = 0.5 * integral + 0.5 * endpoint_term(dec1) - 0.5 * endpoint_term(dec0)
    diagnostics = {
        "chi": chi.name,
        "integral_term": 0.5 * integral,
        "endpoint_term_end": 0.5 * endpoint_term(dec1),
        "endpoint_term_start": -0.5 * endpoint_term(dec0),
        "rescale_factor": scale,
        "min_endpoint_gap": gap,
        "quadrature_error": 0.5 * quad_err,
        "quadrature_panels": float(panels),
    }
    return _finalize(raw, "appendix", model, diagnostics)


# ---------------------------------------------------------------------------
# Cheeger-Gromov bound

def cg_bound(op, s):
    """Two-term bound for sqrt(s) * tr(|D| exp(-s D^2)) excluding the kernel.

    Splits the spectral integral of sqrt(l) exp(-s l) (l an eigenvalue of
    D^2) at mu = 1/sqrt(2(s-1)): below mu the integrand is bounded by its
    maximum e^{-1/2}/sqrt(2s) scaled by sqrt(s); above mu it is dominated by
    sqrt(mu) e^{-(s-1) mu} times the full heat trace.  Returns
    (lhs, term_I, term_II) and checks lhs <= term_I + term_II.
    """
    if not s > 1:
        raise DomainError("cg_bound requires s > 1")
    dec = op if isinstance(op, SpectralDecomposition) else eigh(op)
    lam = dec.eigenvalues
    w = dec.weights
    tol = zero_tolerance(dec.op_norm)
    nonkernel = np.abs(lam) > tol
    lhs = math.sqrt(s) * float(np.sum(
        w[nonkernel] * np.abs(lam[nonkernel])
        * np.exp(-s * lam[nonkernel] ** 2)))
    mu = 1.0 / math.sqrt(2.0 * (s - 1.0))
    lam2 = lam ** 2
    small = nonkernel & (lam2 <= mu)
    term_i = (math.exp(-0.5) / math.sqrt(2.0)) * float(np.sum(w[small]))
    heat = float(np.sum(w * np.exp(-lam2)))
    term_ii = math.sqrt(s) * math.sqrt(mu) * math.exp(-(s - 1.0) * mu) * heat
    if lhs > term_i + term_ii + 1e-12:
        raise NumericError(
            f"cg bound violated: lhs {lhs:.6e} > I + II {term_i + term_ii:.6e}",
            partial=(lhs, term_i, term_ii))
    return lhs, term_i, term_ii
