"""Monte Carlo and exhaustive-enumeration harness.

Every trial draws from its own stream ``stream(seed, 0, trial)``, so reports
do not depend on how trials are batched. Batches are decoded with
vectorized numpy code.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import beta

from . import __version__
from .channels import Dmc, bsc, transmit
from .decoders import (
    BranchMetric,
    DecoderKind,
    batch_counts,
    decode_batch,
    scores_from_counts,
    viterbi_batch,
    viterbi_two_trellis_batch,
)
from .ensembles import (
    Codebook,
    LinearCodeSpec,
    branch_labels,
    build_trellis,
    encode_conv,
    sample_conv,
    sample_linear,
    stream,
)
from .exponents import DeltaStarSpec, bsc_Er_star, dmc_exponent_table
from .probcore import Pmf

BLOCK_ENSEMBLES = ("iid", "linear", "systematic")
CONV_DECODERS = ("two-trellis", "ml")
CSV_COLUMNS = ("theta", "N", "trials", "errors", "p_hat", "ci_lo", "ci_hi", "ratio")
ZERO_ERROR_UPPER = 3.0
MAX_EXACT_N = 14
MAX_MOMENT_WORDS = 2 ** 20


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials."""
    if n < 1 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n >= 1")
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def kind_to_dict(kind: DecoderKind) -> dict:
    d = {"variant": kind.variant, "tie_policy": kind.tie_policy}
    if kind.seed is not None:
        d["seed"] = kind.seed
    if kind.channel is not None:
        d["channel"] = kind.channel.to_dict()
    if kind.family is not None:
        d["family"] = kind.family.to_dict()
        d["xi"] = kind.xi
        d["exponents"] = list(kind.exponents)
    return d


@dataclass(frozen=True)
class SimConfig:
    """One simulation point.

    Block ensembles (``iid``, ``linear``, ``systematic``) use ``N`` and ``M``
    (``M = 2^K`` for the linear ones) with ``decoder`` a :class:`DecoderKind`.
    The ``conv`` ensemble uses ``b, n, K, L`` with ``decoder`` one of
    ``"two-trellis"`` or ``"ml"`` (Viterbi with the true crossover).
    """

    theta: float
    decoder: DecoderKind | str
    trials: int
    seed: int
    ensemble: str = "iid"
    N: int | None = None
    M: int | None = None
    q: Pmf | None = None
    b: int = 1
    n: int = 2
    K: int = 3
    L: int = 64
    fresh_code_per_trial: bool = True
    batch: int = 2000

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.ensemble == "conv":
            if self.decoder not in CONV_DECODERS:
                raise ValueError(f"convolutional decoder must be one of {CONV_DECODERS}")
        elif self.ensemble in BLOCK_ENSEMBLES:
            if not isinstance(self.decoder, DecoderKind):
                raise ValueError("block simulation needs a DecoderKind")
            if self.N is None or self.M is None or self.M < 2 or self.N < 1:
                raise ValueError("block simulation needs N >= 1 and M >= 2")
            if self.ensemble != "iid" and (self.M & (self.M - 1) or self.M >= 2 ** self.N):
                raise ValueError("linear ensembles need M = 2^K with K < N")
        else:
            raise ValueError(f"unknown ensemble {self.ensemble!r}")

    @property
    def channel(self) -> Dmc:
        return bsc(self.theta, allow_degenerate=True)

    @property
    def block_length(self) -> int:
        if self.ensemble == "conv":
            return self.n * (self.L + self.K - 1)
        return self.N

    @property
    def rate(self) -> float:
        """Code rate in nats per channel symbol."""
        if self.ensemble == "conv":
            return self.b / self.n * math.log(2)
        return math.log(self.M) / self.N

    def to_dict(self) -> dict:
        d = {"theta": self.theta, "trials": self.trials, "seed": self.seed,
             "ensemble": self.ensemble, "fresh_code_per_trial": self.fresh_code_per_trial}
        if self.ensemble == "conv":
            d.update(b=self.b, n=self.n, K=self.K, L=self.L, decoder=self.decoder)
        else:
            d.update(N=self.N, M=self.M, decoder=kind_to_dict(self.decoder))
            if self.q is not None:
                d["q"] = self.q.to_list()
        return d


@dataclass
class SimReport:
    errors: int
    trials: int
    ties: int = 0
    bit_errors: int | None = None
    bits: int | None = None
    elapsed: float = 0.0
    config: SimConfig | None = field(default=None, repr=False)

    @property
    def p_hat(self) -> float:
        return self.errors / self.trials

    @property
    def ci95(self) -> tuple[float, float]:
        return clopper_pearson(self.errors, self.trials)

    @property
    def bit_error_rate(self) -> float | None:
        return None if self.bits is None else self.bit_errors / self.bits

    @property
    def bit_ci95(self) -> tuple[float, float] | None:
        return None if self.bits is None else clopper_pearson(self.bit_errors, self.bits)

    def to_dict(self, include_elapsed: bool = False) -> dict:
        d = {"schema": "sim-report/1", "version": __version__,
             "errors": self.errors, "trials": self.trials, "p_hat": self.p_hat,
             "ci95": list(self.ci95), "ties": self.ties}
        if self.bits is not None:
            d.update(bit_errors=self.bit_errors, bits=self.bits,
                     bit_error_rate=self.bit_error_rate, bit_ci95=list(self.bit_ci95))
        if include_elapsed:
            d["elapsed"] = self.elapsed
        if self.config is not None:
            d["config"] = self.config.to_dict()
        return d


# --------------------------------------------------------------------------
# block codes


def _fixed_code_stream(cfg: SimConfig) -> np.random.Generator:
    return stream(cfg.seed, 1)


def _draw_block_code(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.ensemble == "iid":
        q = cfg.q or Pmf.uniform(2)
        if q.size == 2 and q.probs[0] == 0.5:
            return rng.integers(0, 2, size=(cfg.M, cfg.N), dtype=np.uint8)
        return rng.choice(q.size, size=(cfg.M, cfg.N), p=q.probs).astype(np.uint8)
    K = int(cfg.M).bit_length() - 1
    return sample_linear(K, cfg.N, cfg.ensemble == "systematic", rng).codebook().words.astype(np.uint8)


def run_block_sim(cfg: SimConfig) -> SimReport:
    """Block error rate of ``cfg.decoder`` over the configured ensemble."""
    if cfg.ensemble not in BLOCK_ENSEMBLES:
        raise ValueError("run_block_sim needs a block ensemble")
    start = time.perf_counter()
    chan = cfg.channel
    fixed = None if cfg.fresh_code_per_trial else _draw_block_code(cfg, _fixed_code_stream(cfg))
    errors = ties = 0
    for lo in range(0, cfg.trials, cfg.batch):
        hi = min(lo + cfg.batch, cfg.trials)
        B = hi - lo
        words = np.empty((B, cfg.M, cfg.N), np.uint8) if fixed is None else None
        msgs = np.empty(B, np.int64)
        Y = np.empty((B, cfg.N), np.uint8)
        u = np.empty(B)
        for i, t in enumerate(range(lo, hi)):
            g = stream(cfg.seed, 0, t)
            cb = fixed if fixed is not None else _draw_block_code(cfg, g)
            if words is not None:
                words[i] = cb
            m = int(g.integers(cfg.M))
            msgs[i] = m
            Y[i] = transmit(chan, cb[m], g)
            u[i] = g.random()
        chosen, tied = decode_batch(fixed if fixed is not None else words, Y, cfg.decoder, u=u)
        errors += int(np.count_nonzero(chosen != msgs))
        ties += int(np.count_nonzero(tied))
    return SimReport(errors, cfg.trials, ties, elapsed=time.perf_counter() - start, config=cfg)


# --------------------------------------------------------------------------
# convolutional codes


def run_conv_sim(cfg: SimConfig) -> SimReport:
    """Information-bit and frame errors of Viterbi decoding over fresh time-varying codes."""
    if cfg.ensemble != "conv":
        raise ValueError("run_conv_sim needs the conv ensemble")
    start = time.perf_counter()
    chan = cfg.channel
    b, n, K, L = cfg.b, cfg.n, cfg.K, cfg.L
    T = L + K - 1
    base = None if cfg.fresh_code_per_trial else sample_conv(b, n, K, L, _fixed_code_stream(cfg))
    trellis = build_trellis(base or sample_conv(b, n, K, L, np.random.default_rng(0)))
    # at theta in {0, 1/2} minimum Hamming distance is already ML
    ml_metric = BranchMetric() if cfg.theta in (0.0, 0.5) or cfg.theta >= 1.0 \
        else BranchMetric("negloglik", cfg.theta)
    errors = bit_errors = 0
    for lo in range(0, cfg.trials, cfg.batch):
        hi = min(lo + cfg.batch, cfg.trials)
        B = hi - lo
        gens = np.empty((B, T, K, b, n), np.uint8)
        offs = np.empty((B, T, n), np.uint8)
        info = np.empty((B, b * L), np.uint8)
        Y = np.empty((B, n * T), np.uint8)
        for i, t in enumerate(range(lo, hi)):
            g = stream(cfg.seed, 0, t)
            spec = base if base is not None else sample_conv(b, n, K, L, g)
            gens[i], offs[i] = spec.generators, spec.v0
            info[i] = g.integers(0, 2, size=b * L, dtype=np.uint8)
            Y[i] = transmit(chan, encode_conv(spec, info[i]), g)
        labels = branch_labels(b, n, K, L, gens, offs)
        if cfg.decoder == "two-trellis":
            est, _ = viterbi_two_trellis_batch(trellis, Y, labels)
        else:
            est, _ = viterbi_batch(trellis, Y, ml_metric, "min", labels)
        wrong = est != info
        bit_errors += int(np.count_nonzero(wrong))
        errors += int(np.count_nonzero(wrong.any(axis=1)))
    return SimReport(errors, cfg.trials, 0, bit_errors, cfg.trials * b * L,
                     time.perf_counter() - start, cfg)


def run_sim(cfg: SimConfig) -> SimReport:
    return run_conv_sim(cfg) if cfg.ensemble == "conv" else run_block_sim(cfg)


# --------------------------------------------------------------------------
# competitive ratio and exponent regression


@dataclass
class RatioRow:
    theta: float
    N: int
    trials: int
    errors: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    ratio: float
    upper_bound_only: bool

    def as_csv_row(self) -> list:
        return [self.theta, self.N, self.trials, self.errors, self.p_hat,
                self.ci_lo, self.ci_hi, self.ratio]


@dataclass
class RatioTable:
    rows: list[RatioRow]
    xi: float

    @property
    def max_ratio(self) -> float:
        return max(r.ratio for r in self.rows)

    def to_dict(self) -> dict:
        return {"schema": "ratio-table/1", "version": __version__, "xi": self.xi,
                "max_ratio": self.max_ratio, "rows": [vars(r).copy() for r in self.rows]}

    def to_csv(self) -> str:
        return rows_to_csv(r.as_csv_row() for r in self.rows)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def ratio_row(report: SimReport, xi: float, exponent: float) -> RatioRow:
    """``p_hat / exp(-N xi E*)``; zero-error cells use ``3/trials`` and are flagged."""
    cfg = report.config
    lo, hi = report.ci95
    zero = report.errors == 0
    p = ZERO_ERROR_UPPER / report.trials if zero else report.p_hat
    N = cfg.block_length
    ratio = p * math.exp(N * xi * exponent)
    return RatioRow(cfg.theta, N, report.trials, report.errors, report.p_hat, lo, hi, ratio, zero)


def competitive_ratio(cfg: SimConfig, thetas, xi: float, rate: float | None = None) -> RatioTable:
    """Empirical competitive ratio of ``cfg.decoder`` at every ``theta``.

    The same decoder (and seed) is run at every crossover; the denominator
    uses the BSC random-coding exponent at ``rate`` (default: the code rate).
    """
    R = cfg.rate if rate is None else rate
    rows = []
    for th in thetas:
        c = SimConfig(**{**cfg.__dict__, "theta": float(th)})
        rep = run_sim(c)
        rows.append(ratio_row(rep, xi, bsc_Er_star(float(th), R).value))
    return RatioTable(rows, xi)


@dataclass
class Regression:
    slope: float
    intercept: float
    used: list[tuple[int, float]]
    excluded: list[tuple[int, float]]


def exponent_regression(points) -> Regression:
    """Least-squares slope of ``-ln p_hat`` against ``N``; zero estimates are excluded."""
    pts = [(int(N), float(p)) for N, p in points]
    used = [(N, p) for N, p in pts if p > 0]
    excluded = [(N, p) for N, p in pts if p <= 0]
    if len(used) < 3:
        raise ValueError(f"need at least 3 points with p_hat > 0, got {len(used)}")
    x = np.array([N for N, _ in used], dtype=float)
    y = -np.log([p for _, p in used])
    slope, intercept = np.polyfit(x, y, 1)
    return Regression(float(slope), float(intercept), used, excluded)


# --------------------------------------------------------------------------
# exhaustive oracles


def _all_words(N: int, x_size: int = 2) -> np.ndarray:
    idx = np.arange(x_size ** N)
    return ((idx[:, None] // x_size ** np.arange(N - 1, -1, -1)) % x_size).astype(np.int64)


def exact_message_error(code, theta: float, kind: DecoderKind) -> np.ndarray:
    """Exact per-message error probability over a BSC by enumerating all outputs.

    ``code`` is a :class:`LinearCodeSpec` or a :class:`Codebook`. An ERROR
    decision counts against every message.
    """
    cb = code.codebook() if isinstance(code, LinearCodeSpec) else code
    if cb.N > MAX_EXACT_N:
        raise ValueError(f"exhaustive enumeration limited to N <= {MAX_EXACT_N}")
    Y = _all_words(cb.N)
    chosen, _ = decode_batch(cb.words, Y, kind)
    d = np.count_nonzero(cb.words[:, None, :] != Y[None, :, :], axis=-1)   # (M, 2^N)
    with np.errstate(divide="ignore"):
        logp = d * np.log(theta) + (cb.N - d) * np.log1p(-theta)
    prob = np.exp(logp)
    wrong = chosen[None, :] != np.arange(cb.M)[:, None]
    return np.where(wrong, prob, 0.0).sum(axis=1)


def brute_force_moment(w: Dmc, alpha: float, xi: float, y, N: int | None = None,
                       q: Pmf | None = None, R: float = 0.0, ensemble: str = "iid") -> float:
    """``(1/N) ln E_Q[exp(N alpha f_theta(X, y))]`` by summing over every input word.

    ``ensemble="iid"`` uses ``Q = q^N``; ``"type"`` uses the uniform
    distribution on the type class of composition ``N q`` (which must be
    integral). ``R`` enters through ``E_r*(theta)`` only.
    """
    y = np.asarray(y, dtype=np.int64)
    N = y.size if N is None else N
    if y.shape != (N,):
        raise ValueError("y must have length N")
    q = Pmf.uniform(w.x_size) if q is None else q
    if w.x_size ** N > MAX_MOMENT_WORDS:
        raise ValueError(f"enumeration limited to |X|^N <= {MAX_MOMENT_WORDS}")
    if ensemble not in ("iid", "type"):
        raise ValueError("ensemble must be 'iid' or 'type'")
    if alpha == 0:
        return 0.0
    E = 0.0 if xi == 0 else float(dmc_exponent_table([w], q, R)[0])
    X = _all_words(N, w.x_size)
    log_w = w.log_w()
    with np.errstate(invalid="ignore"):
        ll = log_w[X, y[None, :]].sum(axis=1)
    with np.errstate(divide="ignore"):
        log_q = np.log(q.probs)
    if ensemble == "iid":
        log_Q = log_q[X].sum(axis=1)
    else:
        counts = N * q.probs
        if np.any(np.abs(counts - np.round(counts)) > 1e-9):
            raise ValueError("type-class ensemble needs N q to be integral")
        target = np.round(counts).astype(np.int64)
        comp = np.stack([(X == a).sum(axis=1) for a in range(w.x_size)], axis=1)
        member = np.all(comp == target, axis=1)
        log_size = math.lgamma(N + 1) - sum(math.lgamma(c + 1) for c in target)
        log_Q = np.where(member, -log_size, -np.inf)
    with np.errstate(invalid="ignore"):
        expo = np.where(np.isneginf(log_Q), -np.inf, log_Q + alpha * (ll + N * xi * E))
    return float(logsumexp(expo) / N)


@dataclass(frozen=True)
class MomentFixture:
    """One moment-rate comparison: channel, tilt, fraction, rate and ensemble."""

    theta: float
    alpha: float
    xi: float
    R: float = 0.0
    ensemble: str = "type"

    def spec(self) -> DeltaStarSpec:
        if self.ensemble == "iid":
            return DeltaStarSpec.uniform()
        return DeltaStarSpec.neighborhood(Pmf.uniform(2), 0.0)

    def balanced_output(self, N: int) -> np.ndarray:
        return np.arange(N) % 2


# Constant-composition fixtures: with i.i.d. codewords the finite-N sum
# factorizes and equals the limit exactly, so only type-class ensembles show
# a vanishing finite-N gap.
STANDARD_MOMENT_FIXTURES = (
    MomentFixture(0.1, 1.0, 0.0),
    MomentFixture(0.1, 0.5, 1.0, 0.1),
    MomentFixture(0.2, 1.0, 0.5, 0.05),
    MomentFixture(0.05, 2.0, 1.0, 0.2),
)


def moment_gap(fx: MomentFixture, N: int) -> float:
    """``|brute force - method-of-types rate|`` at block length ``N`` (even)."""
    from .xisolver import log_moment_rate

    w = bsc(fx.theta)
    y = fx.balanced_output(N)
    q = Pmf.uniform(2)
    bf = brute_force_moment(w, fx.alpha, fx.xi, y, N, q, fx.R, fx.ensemble)
    rate = log_moment_rate(w, fx.alpha, fx.xi, Pmf.empirical(y, 2), fx.spec(), fx.R)
    return abs(bf - rate)


def exact_average_error(cb: Codebook, theta: float, kind: DecoderKind) -> float:
    """Average over messages of :func:`exact_message_error`."""
    return float(exact_message_error(cb, theta, kind).mean())


def mmi_rho_agreement(N: int, n_pairs: int, rng: np.random.Generator) -> float:
    """Fraction of (codeword pair, output) cases where MMI and the rho-metric rank alike.

    Every binary output of length ``N`` is tried against ``n_pairs`` random
    codeword pairs. Ties count as a ranking, so agreement requires matching
    tie sets too. This is a measurement, not an invariant: empirical mutual
    information depends on codeword composition as well as distance.
    """
    if N > MAX_EXACT_N:
        raise ValueError(f"exhaustive enumeration limited to N <= {MAX_EXACT_N}")
    pairs = rng.integers(0, 2, (n_pairs, 2, N))
    Y = _all_words(N)
    mmi, rho = DecoderKind.mmi(), DecoderKind.rho()
    agree = 0
    for lo in range(0, Y.shape[0], 64):
        counts = batch_counts(pairs[None], Y[lo:lo + 64, None, :])
        m = scores_from_counts(counts, mmi)
        r = scores_from_counts(counts, rho)
        m_sign = np.sign(m[..., 0] - m[..., 1]) * (np.abs(m[..., 0] - m[..., 1]) > 1e-12)
        agree += int(np.count_nonzero(m_sign == np.sign(r[..., 0] - r[..., 1])))
    return agree / (n_pairs * Y.shape[0])
