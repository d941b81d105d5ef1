"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (visible without
``-s``) and then asserts the criterion at its stated tolerance.
"""

import math
import time

import numpy as np
import pytest

from minimax_decoding.channels import ChannelFamily, Dmc, bsc, capacity
from minimax_decoding.decoders import (
    TIE_RTOL,
    DecoderKind,
    batch_counts,
    scores_from_counts,
    viterbi_two_trellis,
)
from minimax_decoding.ensembles import (
    build_trellis,
    encode_conv,
    message_bits,
    sample_conv,
    sample_linear,
    stream,
)
from minimax_decoding.exponents import bsc_Er_star, conv_cutoff_R0, gallager_e0
from minimax_decoding.mcsim import (
    STANDARD_MOMENT_FIXTURES,
    SimConfig,
    _all_words,
    exact_message_error,
    exponent_regression,
    moment_gap,
    run_sim,
)
from minimax_decoding.probcore import JointPmf, Pmf, mutual_information
from minimax_decoding.xisolver import (
    XiProblem,
    bsc_closed_ratio,
    decomposition_identity,
    optimal_witness,
    solve,
)


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def ci_overlap(a, b) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def ties_like(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise form of the decoders' float tie rule."""
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return (a == b) | (np.abs(a - b) <= TIE_RTOL * scale)


@pytest.mark.parametrize("R", [0.05, 0.1, 0.2])
def test_1_bsc_interval_xi_is_one(R, report):
    fam = ChannelFamily.bsc_interval(0.05, 0.30, 0.0125)
    t0 = time.perf_counter()
    xi = solve(XiProblem(fam, R, mode="bsc-closed")).xi
    dt = time.perf_counter() - t0
    ok = 0.99 <= xi <= 1 + 1e-6 and dt < 60
    report(1, ok, f"R={R} xi={xi:.9f} time={dt:.1f}s")
    assert ok


def test_2_witness_ratio(report):
    R = 0.1
    a, b = bsc_Er_star(0.05, R), bsc_Er_star(0.2, R)
    rho, lam = optimal_witness(a.rho_hat, b.rho_hat)
    ratio = bsc_closed_ratio(0.05, 0.2, rho, lam, R, a.value, b.value)
    ok = abs(ratio - 1.0) <= 1e-9
    report(2, ok, f"ratio-1={ratio - 1:.3e}")
    assert ok


def test_3_decomposition_identity(report):
    rng = np.random.default_rng(3)
    worst, n = 0.0, 0
    while n < 10_000:
        theta, theta_p = rng.uniform(1e-3, 1 - 1e-3, 2)
        lam, rho, R = rng.uniform(1e-3, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 0.7)
        if lam * rho > 0.99:
            continue
        lhs, rhs = decomposition_identity(theta, theta_p, lam, rho, R)
        worst = max(worst, abs(lhs - rhs))
        n += 1
    ok = worst <= 1e-10
    report(3, ok, f"max |lhs-rhs|={worst:.3e} over {n} tuples")
    assert ok


def test_4_f_and_rho_orderings(report):
    N = 10
    fam = ChannelFamily.bsc_symmetric(0.05)
    rng = np.random.default_rng(4)
    pairs = rng.integers(0, 2, (10_000, 2, N))
    Y = _all_words(N)
    mismatches = 0
    for xi in (0.0, 0.5, 1.0):
        kind = DecoderKind.minimax(fam, xi, 0.1)
        for lo in range(0, Y.shape[0], 64):
            y = Y[lo:lo + 64, None, :]
            counts = batch_counts(pairs[None], y)         # (64, P, 2, 2, 2)
            f = scores_from_counts(counts, kind)
            r = -scores_from_counts(counts, DecoderKind.rho())   # min(d, N - d)
            f_tie = ties_like(f[..., 0], f[..., 1])
            f_first = (f[..., 0] > f[..., 1]) & ~f_tie
            mismatches += np.count_nonzero(f_tie != (r[..., 0] == r[..., 1]))
            mismatches += np.count_nonzero(f_first != (r[..., 0] < r[..., 1]))
    ok = mismatches == 0
    report(4, ok, f"{mismatches} ordering mismatches over 3 x 1024 x 10^4 comparisons")
    assert ok


def test_5_linear_codes_symmetric_error(report):
    N, K = 6, 2
    fam = ChannelFamily.bsc_interval(0.05, 0.30, 0.0125)
    kind = DecoderKind.minimax(fam, 1.0, K * math.log(2) / N, tie_policy="error")
    t0 = time.perf_counter()
    worst = 0.0
    for systematic in (False, True):
        for seed in range(50):
            spec = sample_linear(K, N, systematic, stream(seed, 5, int(systematic)))
            for theta in (0.05, 0.1, 0.25):
                errs = exact_message_error(spec, theta, kind)
                worst = max(worst, float(errs.max() - errs.min()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 30
    report(5, ok, f"max spread={worst:.3e} time={dt:.1f}s")
    assert ok


def test_6_two_trellis_against_brute_force(report):
    b, n, K, L = 1, 2, 3, 8
    infos = message_bits(np.arange(2 ** (b * L)), b * L)
    bad_value = bad_path = 0
    for case in range(1000):
        rng = stream(case, 6)
        spec = sample_conv(b, n, K, L, rng)
        codes = encode_conv(spec, infos)
        y = rng.integers(0, 2, spec.code_length)
        d = np.count_nonzero(codes != y, axis=1)
        rho = np.minimum(d, spec.code_length - d)
        got, val = viterbi_two_trellis(build_trellis(spec), y)
        bad_value += round(val * spec.code_length) != rho.min()
        if np.count_nonzero(rho == rho.min()) == 1:
            bad_path += not np.array_equal(got, infos[np.argmin(rho)])
    ok = bad_value == 0 and bad_path == 0
    report(6, ok, f"value mismatches={bad_value} path mismatches={bad_path} of 1000")
    assert ok


def test_7_rho_decoder_matches_ml_exponent(report):
    theta, M, trials = 0.05, 16, 100_000
    t0 = time.perf_counter()
    reps = {}
    for name, kind in (("rho", DecoderKind.rho()), ("ml", DecoderKind.ml(bsc(theta)))):
        reps[name] = [run_sim(SimConfig(theta, kind, trials, 77, N=N, M=M)) for N in (32, 64, 128)]
    dt = time.perf_counter() - t0
    per_n = []
    for r, m in zip(reps["rho"], reps["ml"]):
        close = ci_overlap(r.ci95, m.ci95) or (m.p_hat > 0 and r.p_hat / m.p_hat <= 3)
        per_n.append(close)
    counts = " ".join(f"N={r.config.N}:{r.errors}/{m.errors}" for r, m in zip(reps["rho"], reps["ml"]))
    try:
        s_rho = exponent_regression([(r.config.N, r.p_hat) for r in reps["rho"]]).slope
        s_ml = exponent_regression([(r.config.N, r.p_hat) for r in reps["ml"]]).slope
        slope_gap = abs(s_rho - s_ml)
        detail = f"slope gap={slope_gap:.4f}"
    except ValueError as exc:
        slope_gap = math.inf
        detail = f"regression impossible ({exc})"
    ok = slope_gap <= 0.05 and all(per_n) and dt < 600
    report(7, ok, f"{detail}; errors rho/ml {counts}; time={dt:.1f}s")
    assert ok


@pytest.mark.parametrize("K", [3, 4])
def test_8_two_trellis_bit_errors_match_ml(K, report):
    kw = dict(ensemble="conv", K=K, L=64)
    tt = run_sim(SimConfig(0.02, "two-trellis", 100_000, 88, **kw))
    ml = run_sim(SimConfig(0.02, "ml", 100_000, 88, **kw))
    ok = ci_overlap(tt.bit_ci95, ml.bit_ci95)
    report(8, ok, f"K={K} two-trellis BER={tt.bit_error_rate:.5f} {tt.bit_ci95} "
                  f"ML BER={ml.bit_error_rate:.5f} {ml.bit_ci95}")
    assert ok


def test_9_moment_rate_gap(report):
    rows, ok = [], True
    for fx in STANDARD_MOMENT_FIXTURES:
        gaps = [moment_gap(fx, N) for N in (8, 10, 12)]
        ok &= gaps[2] <= 0.35 and gaps[0] > gaps[1] > gaps[2]
        rows.append("/".join(f"{g:.4f}" for g in gaps))
    report(9, ok, "gaps at N=8/10/12: " + ", ".join(rows))
    assert ok


def test_10_exponent_function_properties(report):
    w3 = Dmc(np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]]))
    checks = {}
    cases = [(bsc(0.1), Pmf.uniform(2)), (w3, Pmf([0.4, 0.6]))]
    checks["E0(rho=0)==0"] = all(gallager_e0(w, q, 0.0) == 0.0 for w, q in cases)
    h = 1e-6
    fd_err = max(abs(gallager_e0(w, q, h) / h
                     - mutual_information(JointPmf(q.probs[:, None] * w.w)))
                 for w, q in cases)
    checks["dE0/drho"] = fd_err <= 1e-4
    cap = capacity(bsc(0.11))
    r0 = conv_cutoff_R0(bsc(0.1))
    checks["capacity"] = abs(cap - 0.348187) <= 1e-6
    checks["R0"] = abs(r0 - 0.226841) <= 1e-6
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report(10, ok, f"fd err={fd_err:.2e} capacity={cap:.6f} (target 0.348187) "
                   f"R0={r0:.6f} (target 0.226841) failed={failed}")
    assert ok
