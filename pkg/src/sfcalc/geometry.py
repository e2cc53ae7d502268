"""Odd signature operator on the circle under a path of metrics.

Functions and 1-forms are discretized in a real Fourier basis
{1, cos x, sin x, ..., cos(n/2 x), sin(n/2 x)} (n + 1 coefficients per form
degree).  Differentiation is exact on resolved modes; multiplication by the
conformal factor h is a dealiased pointwise product on a 2n-point grid.  The
discrete Hodge star on 1-forms is the exact matrix inverse of the star on
functions, so the chirality involution squares to the identity exactly and
all adjointness relations hold at roundoff level.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .engines import (CHI_PROFILES, cg_bound, sf_appendix, sf_crossing,
                      sf_integral, sf_phillips)
from .errors import DomainError, ValidationError
from .path import OperatorPath
from .tracemodel import (AffineSymbol, BlockHermitian, FrequencyModel,
                         IndicatorSymbol, WeightedBlockModel, eigh,
                         freq_trace, zero_tolerance)

__all__ = ["CircleMetricPath", "SignatureOperator", "build_signature",
           "trivialization", "trivialized_path", "signature_flow_scenario",
           "dirac_family_scenario", "standard_metric_paths"]


# ---------------------------------------------------------------------------
# Fourier scaffolding

def _fourier_basis(n):
    """Evaluation matrix of the n+1 real Fourier modes on the 2n grid."""
    grid = np.arange(2 * n) * (math.pi / n)
    cols = [np.ones_like(grid)]
    for j in range(1, n // 2 + 1):
        cols.append(np.cos(j * grid))
        cols.append(np.sin(j * grid))
    return grid, np.stack(cols, axis=1)


def _diff_matrix(n):
    m = n + 1
    dx = np.zeros((m, m))
    for j in range(1, n // 2 + 1):
        dx[2 * j, 2 * j - 1] = -j   # d/dx cos(jx) = -j sin(jx)
        dx[2 * j - 1, 2 * j] = j    # d/dx sin(jx) =  j cos(jx)
    return dx


def _sym_sqrt(mat):
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    if np.any(vals <= 0):
        raise ValidationError("matrix square root needs a positive definite input")
    root = (vecs * np.sqrt(vals)) @ vecs.T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.T
    return root, inv_root


# ---------------------------------------------------------------------------
# metric paths

@dataclass(frozen=True, eq=False)
class CircleMetricPath:
    """Conformal factor h(u, x) > 0 as Fourier data in x, sampled in u.

    ``coeff_samples[j]`` holds the n + 1 real Fourier coefficients of
    h(u_j, .); evaluation between samples uses a C^1 cubic interpolant.
    The path must be constant near u = 0 and u = 1.
    """

    u_samples: np.ndarray
    coeff_samples: np.ndarray = field(repr=False)
    n: int
    h_min: float = 1e-6

    def __init__(self, u_samples, coeff_samples, n, h_min=1e-6):
        n = int(n)
        if n < 4 or n % 2:
            raise ValidationError("spatial resolution n must be an even integer >= 4")
        us = np.asarray(u_samples, dtype=float)
        coeffs = np.asarray(coeff_samples, dtype=float)
        if coeffs.shape != (us.size, n + 1):
            raise ValidationError(
                f"coefficient array shape {coeffs.shape} does not match "
                f"({us.size}, {n + 1})")
        if us[0] != 0.0 or us[-1] != 1.0 or np.any(np.diff(us) <= 0):
            raise ValidationError("u samples must increase strictly from 0 to 1")
        if us.size < 4:
            raise ValidationError("need at least 4 u-samples")
        for i, j, side in ((0, 1, "start"), (-2, -1, "end")):
            if not np.array_equal(coeffs[i], coeffs[j]):
                raise ValidationError(f"metric must be constant near the {side}")
        object.__setattr__(self, "u_samples", us)
        object.__setattr__(self, "coeff_samples", coeffs)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h_min", float(h_min))
        grid, basis = _fourier_basis(n)
        object.__setattr__(self, "_grid", grid)
        object.__setattr__(self, "_basis", basis)
        object.__setattr__(self, "_tangents", self._build_tangents())
        for u in np.linspace(0.0, 1.0, 4 * us.size + 1):
            h = self.h_grid(float(u))
            if h.min() < self.h_min:
                raise ValidationError(
                    f"conformal factor dips to {h.min():.3e} at u={u:.3f}")

    def _build_tangents(self):
        us, c = self.u_samples, self.coeff_samples
        t = np.empty_like(c)
        for j in range(us.size):
            if j == 0:
                h0, h1 = us[1] - us[0], us[2] - us[1]
                t[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * c[0]
                        + (h0 + h1) / (h0 * h1) * c[1]
                        - h0 / (h1 * (h0 + h1)) * c[2])
            elif j == us.size - 1:
                h0, h1 = us[-2] - us[-3], us[-1] - us[-2]
                t[-1] = (h1 / (h0 * (h0 + h1)) * c[-3]
                         - (h0 + h1) / (h0 * h1) * c[-2]
                         + (2 * h1 + h0) / (h1 * (h0 + h1)) * c[-1])
            else:
                ha, hb = us[j] - us[j - 1], us[j + 1] - us[j]
                t[j] = (-hb / (ha * (ha + hb)) * c[j - 1]
                        + (hb - ha) / (ha * hb) * c[j]
                        + ha / (hb * (ha + hb)) * c[j + 1])
        return t

    def coefficients(self, u):
        u = float(u)
        if not 0.0 <= u <= 1.0:
            raise DomainError(f"metric parameter {u} outside [0, 1]")
        us = self.u_samples
        j = min(max(int(np.searchsorted(us, u, side="right")) - 1, 0), us.size - 2)
        h = us[j + 1] - us[j]
        t = (u - us[j]) / h
        p0, p1 = self.coeff_samples[j], self.coeff_samples[j + 1]
        m0, m1 = self._tangents[j] * h, self._tangents[j + 1] * h
        h00 = 2 * t ** 3 - 3 * t ** 2 + 1
        h10 = t ** 3 - 2 * t ** 2 + t
        h01 = -2 * t ** 3 + 3 * t ** 2
        h11 = t ** 3 - t ** 2
        return h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1

    def h_grid(self, u):
        return self._basis @ self.coefficients(u)


def _metric_from_profile(n, num_samples, coeff_fn, margin=0.15):
    """Sample a metric path, time-warped so it is flat near the endpoints."""
    from .path import flat_profile

    ts = np.linspace(0.0, 1.0, num_samples)
    coeffs = np.stack([coeff_fn(float(flat_profile(t, margin))) for t in ts])
    return CircleMetricPath(ts, coeffs, n)


def standard_metric_paths(n=16, num_samples=17):
    """Three distinct endpoint-flat metric paths used by the scenarios."""

    def coeffs(entries):
        c = np.zeros(n + 1)
        for idx, val in entries.items():
            c[idx] = val
        return c

    def path_a(v):  # 1 + 0.3 v (1 - v) sin x, a loop through the flat metric
        return coeffs({0: 1.0, 2: 0.3 * v * (1.0 - v)})

    def path_b(v):  # 1 + 0.25 v cos x + 0.1 v sin 2x
        return coeffs({0: 1.0, 1: 0.25 * v, 4: 0.1 * v})

    def path_c(v):  # 1 + 0.2 v cos 2x + 0.15 v^2 sin x
        return coeffs({0: 1.0, 3: 0.2 * v, 2: 0.15 * v * v})

    return {
        "loop_sin": _metric_from_profile(n, num_samples, path_a),
        "cos_ramp": _metric_from_profile(n, num_samples, path_b),
        "mixed_quadratic": _metric_from_profile(n, num_samples, path_c),
    }


# ---------------------------------------------------------------------------
# signature operator assembly

@dataclass(frozen=True, eq=False)
class SignatureOperator:
    """Discrete tau d + d tau on functions and 1-forms, with its chirality
    involution and the metric Gram matrix."""

    matrix: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    n: int

    def __post_init__(self):
        dim = 2 * (self.n + 1)
        tau2 = self.tau @ self.tau
        if np.linalg.norm(tau2 - np.eye(dim)) > 1e-10 * dim:
            raise ValidationError("chirality involution does not square to 1")
        gd = self.gram @ self.matrix
        defect = np.linalg.norm(gd - gd.conj().T)
        if defect > 1e-9 * max(1.0, np.linalg.norm(gd)):
            raise ValidationError(
                f"operator is not self-adjoint for the metric Gram ({defect:.3e})")


def _degree_pieces(metric, u):
    n = metric.n
    h = metric.h_grid(u)
    basis = metric._basis
    weight = math.pi / n
    gram_flat = basis.T @ (weight * basis)
    mult_h = np.linalg.solve(gram_flat, basis.T @ (weight * (h[:, None] * basis)))
    mult_h_inv = np.linalg.inv(mult_h)
    dx = _diff_matrix(n)
    d0 = -1j * mult_h_inv @ dx          # on functions
    d1 = -1j * dx @ mult_h_inv          # on 1-forms
    g0 = gram_flat @ mult_h
    g1 = gram_flat @ mult_h_inv
    g0 = 0.5 * (g0 + g0.T)
    g1 = 0.5 * (g1 + g1.T)
    return d0, d1, g0, g1, mult_h, mult_h_inv


def build_signature(metric, u):
    """Assemble the signature operator at metric parameter u."""
    d0, d1, g0, g1, mult_h, mult_h_inv = _degree_pieces(metric, u)
    n = metric.n
    m = n + 1
    dim = 2 * m
    matrix = np.zeros((dim, dim), dtype=complex)
    matrix[:m, :m] = d0
    matrix[m:, m:] = d1
    tau = np.zeros((dim, dim), dtype=complex)
    tau[:m, m:] = -1j * mult_h_inv      # star: 1-forms -> functions, times -i
    tau[m:, :m] = 1j * mult_h           # star: functions -> 1-forms, times i
    gram = np.zeros((dim, dim))
    gram[:m, :m] = g0
    gram[m:, m:] = g1
    return SignatureOperator(matrix=matrix, tau=tau, gram=gram, n=n)


def engine_model(n):
    """Weighted block model for the trivialized operators: one block per
    form degree, unit weight."""
    return WeightedBlockModel([(n + 1, 1.0), (n + 1, 1.0)])


def _engine_operator(metric, u, model):
    """Similarity transform of the signature operator that is Hermitian for
    the standard inner product:  G_u^{1/2} D_u G_u^{-1/2}, per degree."""
    d0, d1, g0, g1, _, _ = _degree_pieces(metric, u)
    m = metric.n + 1
    mat = np.zeros((2 * m, 2 * m), dtype=complex)
    for sl, dd, gg in ((slice(0, m), d0, g0), (slice(m, 2 * m), d1, g1)):
        root, inv_root = _sym_sqrt(gg)
        block = root @ dd @ inv_root
        mat[sl, sl] = 0.5 * (block + block.conj().T)
    return BlockHermitian(model, mat)


def trivialization(metric, u):
    """Isometry from the metric-u inner-product space to the metric-0 one.

    Returns U with U* G_0 U = G_u exactly (up to matrix square-root
    roundoff); U_0 is the identity.
    """
    _, _, g0_0, g1_0, _, _ = _degree_pieces(metric, 0.0)
    _, _, g0_u, g1_u, _, _ = _degree_pieces(metric, u)
    m = metric.n + 1
    out = np.zeros((2 * m, 2 * m))
    for sl, g_ref, g_cur in ((slice(0, m), g0_0, g0_u),
                             (slice(m, 2 * m), g1_0, g1_u)):
        _, inv_root_ref = _sym_sqrt(g_ref)
        root_cur, _ = _sym_sqrt(g_cur)
        out[sl, sl] = inv_root_ref @ root_cur
    return out


def trivialized_path(metric, model=None):
    """Engine-ready path of the trivialized signature operators."""
    model = model or engine_model(metric.n)
    samples = [(float(u), _engine_operator(metric, float(u), model))
               for u in metric.u_samples]
    return OperatorPath(model, samples, interpolation="linear",
                        endpoint_flat=True)


def _fd4(values, delta):
    """Fourth-order central difference from samples at u-2d..u+2d."""
    m2, m1, p1, p2 = values
    return (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * delta)


def _conjugation_residual(metric, u, s, model, delta=1e-3):
    """| tr(dB/du e^{-sB^2}) - tr(dD/du e^{-sD^2}) | at parameter u.

    B is the similarity-transformed (standard-Hermitian) operator, D the
    metric-self-adjoint one; the two traces agree identically, so the
    residual measures discretization and roundoff only.
    """
    b_probe = []
    d_probe = []
    for k in (-2, -1, 1, 2):
        v = u + k * delta
        b_probe.append(_engine_operator(metric, v, model).mat)
        d0, d1, _, _, _, _ = _degree_pieces(metric, v)
        m = metric.n + 1
        dm = np.zeros((2 * m, 2 * m), dtype=complex)
        dm[:m, :m] = d0
        dm[m:, m:] = d1
        d_probe.append(dm)
    db = _fd4(b_probe, delta)
    dd = _fd4(d_probe, delta)

    b_now = _engine_operator(metric, u, model)
    dec = eigh(b_now)
    heat = (dec.eigenvectors * np.exp(-s * dec.eigenvalues ** 2)) @ dec.eigenvectors.conj().T

    d0, d1, g0, g1, _, _ = _degree_pieces(metric, u)
    m = metric.n + 1
    mixed = np.zeros((2 * m, 2 * m), dtype=complex)
    for sl, gg in ((slice(0, m), g0), (slice(m, 2 * m), g1)):
        root, inv_root = _sym_sqrt(gg)
        mixed[sl, sl] = root @ dd[sl, sl] @ inv_root
    tr_b = complex(np.trace(db @ heat)).real
    tr_d = complex(np.trace(mixed @ heat)).real
    return abs(tr_b - tr_d), tr_b


def _kernel_trace(dec):
    return float(np.sum(dec.weights[dec.kernel_mask()]))


def signature_flow_scenario(metric, engines=("crossing", "phillips", "integral", "appendix"),
                            s_grid=(2.0, 4.0, 16.0, 64.0, 256.0),
                            aps_grid=64, chi_name="sine", heat_s=None,
                            num_cg_points=5):
    """Run the requested spectral-flow engines on the trivialized signature
    path, compute the suspension index, and collect the heat-trace
    diagnostics (conjugation-invariance residual, two-term bound table,
    kernel traces, projection jumps)."""
    from .apsindex import SuspensionProblem, aps_index

    model = engine_model(metric.n)
    path = trivialized_path(metric, model)
    report = {"engines": {}, "n": metric.n}

    if "crossing" in engines:
        report["engines"]["crossing"] = sf_crossing(path)
    if "phillips" in engines:
        report["engines"]["phillips"] = sf_phillips(path)
    if "integral" in engines:
        s_int = heat_s if heat_s is not None else [0.5, 2.0, 8.0]
        report["engines"]["integral"] = {s: sf_integral(path, s) for s in s_int}
    if "appendix" in engines:
        chi = CHI_PROFILES[chi_name]()
        # endpoint kernels are the harmonic modes, constant along the path
        report["engines"]["appendix"] = sf_appendix(
            path, chi, rescale=True, min_endpoint_gap=0.0)

    prob = SuspensionProblem(path=path, grid_size=aps_grid)
    report["aps_index"] = aps_index(prob)

    decs = [eigh(path.sample(j)) for j in range(len(path.us))]
    report["kernel_traces"] = [_kernel_trace(d) for d in decs]

    def nonneg_proj(dec):
        v = dec.eigenvectors[:, dec.eigenvalues >= -zero_tolerance(dec.op_norm)]
        return v @ v.conj().T

    jumps = []
    for a, b in zip(decs[:-1], decs[1:]):
        jumps.append(float(np.linalg.norm(nonneg_proj(b) - nonneg_proj(a), 2)))
    report["projection_jumps"] = jumps

    probe_us = np.linspace(0.25, 0.75, num_cg_points)
    residuals = []
    s_res = s_grid[0] if s_grid else 2.0
    for u in probe_us:
        res, _ = _conjugation_residual(metric, float(u), s_res, model)
        residuals.append(res)
    report["conjugation_residual"] = max(residuals)

    cg_table = {}
    lhs_means = {}
    for s in s_grid:
        rows = []
        for u in probe_us:
            dec = eigh(_engine_operator(metric, float(u), model))
            lhs, term_i, term_ii = cg_bound(dec, s)
            rows.append({"u": float(u), "lhs": lhs, "term_I": term_i,
                         "term_II": term_ii,
                         "bound_holds": lhs <= term_i + term_ii + 1e-12})
        cg_table[s] = rows
        lhs_means[s] = float(np.mean([r["lhs"] for r in rows]))
    report["cg_table"] = cg_table
    report["integrated_lhs"] = lhs_means
    ordered = [lhs_means[s] for s in s_grid]
    report["lhs_monotone_decreasing"] = all(
        b < a for a, b in zip(ordered[:-1], ordered[1:]))
    return report


# ---------------------------------------------------------------------------
# frequency-model Dirac family

def dirac_family_scenario(u_range=(-1.0, 1.0), rho=1.0 / (2.0 * math.pi),
                          xi_max=50.0, num_samples=5):
    """Shifted-symbol family xi + u over ``u_range``: nonzero spectral flow
    with identically trivial kernels."""
    u0, u1 = float(u_range[0]), float(u_range[1])
    model = FrequencyModel(rho=rho, xi_max=xi_max)
    ts = np.linspace(0.0, 1.0, num_samples)
    samples = [(float(t), AffineSymbol(offset=u0 + t * (u1 - u0))) for t in ts]
    path = OperatorPath(model, samples, interpolation="linear")
    flow = sf_phillips(path)

    lo, hi = sorted((-u1, -u0))
    swept = freq_trace(model, IndicatorSymbol(lo, hi), support_hint=(lo, hi)) \
        if hi > lo else 0.0

    tol = 1e-9
    kernel_traces = []
    for t in ts:
        offset = u0 + float(t) * (u1 - u0)
        kernel_traces.append(freq_trace(
            model, IndicatorSymbol(-offset - tol, -offset + tol),
            support_hint=(-offset - tol, -offset + tol)))
    return {
        "sf_phillips": flow,
        "swept_window_trace": swept,
        "kernel_traces": kernel_traces,
        "max_kernel_trace": max(kernel_traces),
    }
