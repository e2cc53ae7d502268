"""Acceptance criteria, one test per criterion, with pass/fail lines.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  Tolerances and seed counts are pinned here and mirror the
contract the library ships under; several criteria assert their wall-clock
budgets as well.
"""

import math
import time

import numpy as np
import pytest

from sfcalc.apsindex import (SuspensionProblem, aps_index,
                             halfline_aps_apply_inverse, halfline_residual,
                             perturbation_truncation_check)
from sfcalc.engines import (CHI_PROFILES, sf_appendix, sf_crossing,
                            sf_integral, sf_phillips)
from sfcalc.generators import (involution_path, random_block_model,
                               random_path, random_unitary_path,
                               rng_from_seed, single_crossing_path)
from sfcalc.geometry import dirac_family_scenario, signature_flow_scenario, \
    standard_metric_paths
from sfcalc.path import (OperatorPath, concatenate, conjugate, direct_sum,
                         flatten_endpoints, reparametrize, reverse)
from sfcalc.tracemodel import BlockHermitian, WeightedBlockModel, eigh
from sfcalc.verify import aps_suite, engines_suite

S_GRID = (2.0, 4.0, 16.0, 64.0, 256.0)


def report_line(number, label, elapsed=None):
    suffix = f" ({elapsed:.1f} s)" if elapsed is not None else ""
    print(f"[PASS] criterion {number}: {label}{suffix}")


@pytest.fixture(scope="module")
def signature_reports():
    """Three n = 16 metric paths, shared by criteria 6 and 7."""
    start = time.perf_counter()
    reports = {name: signature_flow_scenario(metric, s_grid=S_GRID, aps_grid=64)
               for name, metric in standard_metric_paths(n=16).items()}
    return reports, time.perf_counter() - start


def test_criterion_1_engine_agreement():
    start = time.perf_counter()
    results = engines_suite(num_seeds=50, s_grid=(0.5, 2.0, 8.0))
    elapsed = time.perf_counter() - start
    failures = [case for case, ok, _ in results if not ok]
    assert not failures, failures
    assert len(results) == 50
    assert elapsed <= 60.0, f"criterion 1 runtime {elapsed:.1f}s exceeds 60s"
    report_line(1, "crossing == phillips and |integral-crossing|, "
                   "|appendix-crossing| < 1e-6 on 50 seeded paths", elapsed)


def test_criterion_2_index_equals_flow():
    start = time.perf_counter()
    results = aps_suite(num_seeds=30, grid_size=200)
    elapsed = time.perf_counter() - start
    failures = [case for case, ok, _ in results if not ok]
    assert not failures, failures
    assert len(results) == 30
    assert elapsed <= 120.0, f"criterion 2 runtime {elapsed:.1f}s exceeds 120s"
    report_line(2, "aps_index == crossing flow on 30 endpoint-flat paths, "
                   "both schemes, M=200", elapsed)


def test_criterion_3_single_crossing_closed_form():
    path = single_crossing_path()
    chi_a = CHI_PROFILES["sine"]()
    chi_b = CHI_PROFILES["quintic"]()
    assert sf_crossing(path).value == 1.0
    assert sf_phillips(path).value == 1.0
    assert sf_appendix(path, chi_a).value == 1.0
    assert sf_appendix(path, chi_b).value == 1.0
    for s in (0.5, 1.0, 4.0):
        res = sf_integral(path, s, quad_tol=1e-13)
        assert res.value == 1.0
        assert abs(res.raw - 1.0) < 1e-12
        assert abs(res.diagnostics["integral_term"]
                   - math.erf(math.sqrt(s))) < 1e-12
        assert abs(res.diagnostics["eta_term"]
                   - math.erfc(math.sqrt(s))) < 1e-12
    flat = flatten_endpoints(path, margin=0.15)
    assert aps_index(SuspensionProblem(path=flat, grid_size=200)) == 1.0
    report_line(3, "scalar path 2u-1 gives exactly 1 everywhere; "
                   "integral term decomposition matches erf + erfc = 1 at 1e-12")


def test_criterion_4_normalization_lemma():
    cases = [
        (WeightedBlockModel([(2, 1.0)]), [1], 1.0),
        (WeightedBlockModel([(3, 1.0)]), [2], 2.0),
        (WeightedBlockModel([(4, 1.0)]), [3], 3.0),
        (WeightedBlockModel([(1, 1.0), (1, 0.5)]), [1, 1], 1.5),
    ]
    chi = CHI_PROFILES["sine"]()
    for k, (model, minus, expected) in enumerate(cases):
        rng = rng_from_seed(240 + k)
        path, predicted = involution_path(model, minus, rng=rng)
        assert predicted == expected
        assert sf_crossing(path).value == expected
        assert sf_phillips(path).value == expected
        assert abs(sf_integral(path, 2.0).raw - expected) < 1e-6
        assert abs(sf_appendix(path, chi, rescale=True).raw - expected) < 1e-6
        flat = flatten_endpoints(path, margin=0.12, num_samples=41)
        assert aps_index(SuspensionProblem(path=flat, grid_size=200)) == expected
    report_line(4, "involution paths reproduce flow = weighted minus-trace "
                   "for {1, 2, 3, 1.5} by every engine and the index")


def test_criterion_5_type_ii_frequency_example():
    start = time.perf_counter()
    report = dirac_family_scenario((-1.0, 1.0))
    elapsed = time.perf_counter() - start
    assert abs(report["sf_phillips"].value - 1.0 / math.pi) < 1e-7
    assert report["max_kernel_trace"] < 1e-8
    assert elapsed <= 5.0, f"criterion 5 runtime {elapsed:.1f}s exceeds 5s"
    report_line(5, "frequency path xi + u over [-1, 1] flows by 1/pi with "
                   "identically trivial kernels", elapsed)


def test_criterion_6_signature_vanishing(signature_reports):
    reports, elapsed = signature_reports
    assert len(reports) == 3
    for name, report in reports.items():
        values = [report["engines"]["crossing"].raw,
                  report["engines"]["phillips"].raw,
                  report["engines"]["appendix"].raw]
        values += [r.raw for r in report["engines"]["integral"].values()]
        assert max(abs(v) for v in values) < 1e-6, name
        assert report["aps_index"] == 0.0, name
        assert all(k == 2.0 for k in report["kernel_traces"]), name
    assert elapsed <= 90.0, f"criterion 6 runtime {elapsed:.1f}s exceeds 90s"
    report_line(6, "three circle metric paths (n=16): every engine 0 +- 1e-6, "
                   "index 0, kernel trace constant 2", elapsed)


def test_criterion_7_cheeger_gromov_bound(signature_reports):
    reports, _ = signature_reports
    for name, report in reports.items():
        for s in S_GRID:
            for row in report["cg_table"][s]:
                assert row["bound_holds"], (name, s, row)
        means = [report["integrated_lhs"][s] for s in S_GRID]
        assert all(b < a for a, b in zip(means[:-1], means[1:])), name
        assert means[-1] < 1e-3 * means[0], name
    report_line(7, "lhs <= I + II at 5 path points for s in {2,...,256}; "
                   "path-integrated lhs decays monotonically below 1e-3")


def _shifted_to_match(a, b_raw):
    offset = a.eval(1.0).mat - b_raw.eval(0.0).mat
    return OperatorPath(a.model, [
        (float(u), BlockHermitian(a.model, b_raw.sample(j).mat + offset))
        for j, u in enumerate(b_raw.us)])


def _engine_values(path):
    chi = CHI_PROFILES["sine"]()
    return {
        "crossing": sf_crossing(path).value,
        "phillips": sf_phillips(path).value,
        "integral": sf_integral(path, 2.0).raw,
        "appendix": sf_appendix(path, chi, rescale=True).raw,
    }


def test_criterion_8_structural_property_suites():
    start = time.perf_counter()
    tol = 1e-6
    splice_floor = 1e-6

    # concatenation additivity at invertible splices
    done = 0
    seed = 8000
    while done < 20:
        rng = rng_from_seed(seed)
        seed += 1
        model = random_block_model(rng, max_blocks=2, max_block_dim=3)
        a = random_path(rng, model, num_samples=5)
        b = _shifted_to_match(a, random_path(rng, model, num_samples=5))
        if np.min(np.abs(eigh(a.eval(1.0)).eigenvalues)) <= splice_floor:
            continue
        va, vb = _engine_values(a), _engine_values(b)
        vc = _engine_values(concatenate(a, b))
        for key in vc:
            assert abs(vc[key] - va[key] - vb[key]) < tol, ("concat", seed, key)
        done += 1

    for k in range(20):
        rng = rng_from_seed(8100 + k)
        model = random_block_model(rng, max_blocks=2, max_block_dim=3)
        path = random_path(rng, model, num_samples=5)
        base = _engine_values(path)

        warped = reparametrize(path, lambda t: t * t * (3.0 - 2.0 * t),
                               num_samples=21)
        for key, val in _engine_values(warped).items():
            assert abs(val - base[key]) < tol, ("reparametrize", k, key)

        rotated = conjugate(path, random_unitary_path(rng, model, 5))
        for key, val in _engine_values(rotated).items():
            assert abs(val - base[key]) < tol, ("conjugate", k, key)

        other = random_path(rng, random_block_model(rng, max_blocks=2,
                                                    max_block_dim=2),
                            num_samples=5)
        combined = _engine_values(direct_sum(path, other))
        vo = _engine_values(other)
        for key in combined:
            assert abs(combined[key] - base[key] - vo[key]) < tol, \
                ("direct_sum", k, key)

        for key, val in _engine_values(reverse(path)).items():
            assert abs(val + base[key]) < tol, ("antisymmetry", k, key)
    elapsed = time.perf_counter() - start
    report_line(8, "concatenation, reparametrization, conjugation, "
                   "direct-sum and reversal properties hold for every engine "
                   "on 20 seeds each", elapsed)


def test_criterion_9_halfline_inverse_first_order():
    for k in range(5):
        rng = rng_from_seed(9300 + k)
        dim = int(rng.integers(1, 4))
        model = WeightedBlockModel([(dim, 1.0)])
        x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        base = 0.5 * (x + x.conj().T)
        shift = (2.0 + rng.uniform()) * np.eye(dim)
        d0 = BlockHermitian(model, base + shift if k % 2 else base - shift)
        dec = eigh(d0)
        pos = dec.eigenvectors[:, dec.eigenvalues > 0]
        residuals = []
        for grid in (100, 200, 400):
            xs = np.linspace(0.0, 2.0, grid + 1)
            bump = np.exp(-1.0 / np.clip(xs * (1.5 - xs), 1e-12, None)) \
                * ((xs > 0) & (xs < 1.5))
            weights = 0.5 + rng.uniform(size=dim)
            f = np.outer(bump, weights).astype(complex)
            g = halfline_aps_apply_inverse(d0, f, 2.0, grid)
            if pos.shape[1]:
                assert np.abs(pos.conj().T @ g[0]).max() < 1e-8
            residuals.append(halfline_residual(d0, f, g, 2.0))
        assert residuals[1] < 0.7 * residuals[0], residuals
        assert residuals[2] < 0.7 * residuals[1], residuals
    report_line(9, "half-line inverse: P_0 g(0) = 0 to 1e-8 and first-order "
                   "residual decay under two step halvings, 5 seeds")


def test_criterion_10_perturbation_truncation():
    start = time.perf_counter()
    for k in range(10):
        rng = rng_from_seed(10500 + k)
        dims = [int(rng.integers(1, 3)) for _ in range(int(rng.integers(2, 4)))]
        model = WeightedBlockModel([(d, 1.0) for d in dims])
        n = model.dim
        spread = np.linspace(1.0, 4.0, n) * rng.choice([-1.0, 1.0], size=n)
        d = BlockHermitian(model, np.diag(spread).astype(complex))
        while True:
            k1 = np.zeros((n, n), dtype=complex)
            sl = model.block_slices[int(rng.integers(0, len(dims)))]
            width = sl.stop - sl.start
            v = rng.normal(size=(width, min(2, width))) \
                + 1j * rng.normal(size=(width, min(2, width)))
            k1[sl, sl] = v @ v.conj().T
            k1 *= 2.5 / max(np.linalg.norm(k1, 2), 1e-12)
            if np.min(np.abs(np.linalg.eigvalsh(d.mat + k1))) > 0.2:
                break
        us = np.linspace(0.0, 1.0, 9)
        k_path = OperatorPath(model, [
            (float(u), BlockHermitian(model, u * k1)) for u in us])
        report = perturbation_truncation_check(d, k_path, 1.0)
        assert report["minimal_passing_R"] is not None, k
        passing = [e for e in report["sweep"] if e["passes"]]
        assert passing, k
        for entry in passing:
            assert entry["index_matches_flow"], (k, entry)
    elapsed = time.perf_counter() - start
    report_line(10, "truncation sweep finds a finite R with uniform "
                    "invertibility and index == crossing flow at every "
                    "passing R, 10 seeds", elapsed)
