"""Decision rules: ML, the minimax f-metric, the BSC rho-metric, MMI, and
Viterbi decoding of terminated convolutional codes.

Block metrics are functions of the joint type only, so every rule is
evaluated from per-candidate count matrices. Scores are oriented so that
larger is better; the rho-metric is scored as ``-min(d, N - d)`` in exact
integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .channels import ChannelFamily, Dmc
from .ensembles import Codebook, Trellis, message_bits
from .exponents import bsc_Er_star, dmc_exponent_table
from .probcore import Pmf, joint_type, mutual_information

ERROR = -1
TIE_RTOL = 1e-12
VARIANTS = ("ml", "minimax", "rho", "mmi")
TIE_POLICIES = ("lowest", "error", "random")


def family_exponents(family: ChannelFamily, R: float, q: Pmf | None = None) -> np.ndarray:
    """ML random-coding exponent of every family member at rate ``R``."""
    if family.is_bsc and q is None:
        return np.array([bsc_Er_star(t, R).value for t in family.thetas])
    q = Pmf.uniform(family.x_size) if q is None else q
    return dmc_exponent_table(family.channels, q, R)


@dataclass(frozen=True)
class DecoderKind:
    """Decision rule plus tie policy.

    Build with :meth:`ml`, :meth:`minimax`, :meth:`rho` or :meth:`mmi`.
    """

    variant: str
    channel: Dmc | None = None
    family: ChannelFamily | None = None
    xi: float = 0.0
    exponents: tuple[float, ...] | None = None
    tie_policy: str = "lowest"
    seed: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.tie_policy not in TIE_POLICIES:
            raise ValueError(f"tie_policy must be one of {TIE_POLICIES}")
        if self.variant == "ml" and self.channel is None:
            raise ValueError("ML decoding needs the channel")
        if self.variant == "minimax":
            if self.family is None or len(self.family) == 0:
                raise ValueError("minimax decoding needs a non-empty family")
            if not 0.0 <= self.xi <= 1.0:
                raise ValueError("xi must lie in [0, 1]")
            if self.exponents is None or len(self.exponents) != len(self.family):
                raise ValueError("one exponent per family member required")

    @classmethod
    def ml(cls, channel: Dmc, tie_policy: str = "lowest", seed=None) -> "DecoderKind":
        return cls("ml", channel=channel, tie_policy=tie_policy, seed=seed)

    @classmethod
    def minimax(cls, family: ChannelFamily, xi: float, R: float, q: Pmf | None = None,
                tie_policy: str = "lowest", seed=None) -> "DecoderKind":
        exps = tuple(float(e) for e in family_exponents(family, R, q))
        return cls("minimax", family=family, xi=float(xi), exponents=exps,
                   tie_policy=tie_policy, seed=seed)

    @classmethod
    def rho(cls, tie_policy: str = "lowest", seed=None) -> "DecoderKind":
        return cls("rho", tie_policy=tie_policy, seed=seed)

    @classmethod
    def mmi(cls, tie_policy: str = "lowest", seed=None) -> "DecoderKind":
        return cls("mmi", tie_policy=tie_policy, seed=seed)

    @property
    def exact_scores(self) -> bool:
        return self.variant == "rho"

    def alphabet(self) -> tuple[int, int]:
        if self.channel is not None:
            return self.channel.x_size, self.channel.y_size
        if self.family is not None:
            return self.family.x_size, self.family.y_size
        return 2, 2


@dataclass
class DecodeOutcome:
    chosen: int
    tied: bool
    metrics: np.ndarray


# --------------------------------------------------------------------------
# metrics from joint-type counts


def batch_counts(words: np.ndarray, y: np.ndarray, x_size: int = 2, y_size: int = 2) -> np.ndarray:
    """Joint-type counts ``(..., M, |X|, |Y|)`` of every codeword against ``y``."""
    words = np.asarray(words)
    y = np.asarray(y)[..., None, :]
    out = np.empty(np.broadcast_shapes(words.shape, y.shape)[:-1] + (x_size, y_size), np.int64)
    for a in range(x_size):
        wa = words == a
        for b in range(y_size):
            out[..., a, b] = np.count_nonzero(wa & (y == b), axis=-1)
    return out


def _loglik(counts: np.ndarray, log_w: np.ndarray) -> np.ndarray:
    """``sum N_xy ln w(y|x)`` with empty cells contributing zero; broadcasts ``log_w``."""
    with np.errstate(invalid="ignore"):
        terms = np.where(counts > 0, counts * log_w, 0.0)
    return terms.sum(axis=(-2, -1))


def _family_loglik(counts: np.ndarray, family: ChannelFamily) -> np.ndarray:
    """Normalized log-likelihoods ``(..., T)`` for every family member."""
    n = counts.sum(axis=(-2, -1))
    if family.is_bsc and counts.shape[-2:] == (2, 2):
        # depends on the Hamming distance only, so equal distances give equal floats
        d = (counts[..., 0, 1] + counts[..., 1, 0])[..., None].astype(float)
        th = np.asarray(family.thetas)
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = np.where(d > 0, d * np.log(th), 0.0) + np.where(n[..., None] - d > 0,
                                                                   (n[..., None] - d) * np.log1p(-th), 0.0)
    else:
        log_w = np.stack([c.log_w() for c in family.channels])
        ll = _loglik(counts[..., None, :, :], log_w)
    return ll / n[..., None]


def _mmi(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=(-2, -1), keepdims=True)
    p = counts / n
    px = p.sum(axis=-1, keepdims=True)
    py = p.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p / (px * py)), 0.0)
    return np.maximum(terms.sum(axis=(-2, -1)), 0.0)


def scores_from_counts(counts: np.ndarray, kind: DecoderKind) -> np.ndarray:
    """Larger-is-better score per candidate."""
    if kind.variant == "rho":
        n = counts.sum(axis=(-2, -1))
        d = counts[..., 0, 1] + counts[..., 1, 0]
        return -np.minimum(d, n - d)
    if kind.variant == "mmi":
        return _mmi(counts)
    if kind.variant == "ml":
        n = counts.sum(axis=(-2, -1))
        return _loglik(counts, kind.channel.log_w()) / n
    ll = _family_loglik(counts, kind.family)
    return np.max(ll + kind.xi * np.asarray(kind.exponents), axis=-1)


def metric_values(counts: np.ndarray, kind: DecoderKind) -> np.ndarray:
    """Metric in its natural units (the rho-metric as a fraction in ``[0, 1/2]``)."""
    s = scores_from_counts(counts, kind)
    if kind.variant == "rho":
        return -s / counts.sum(axis=(-2, -1))
    return s


def _check_pair(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("sequences must be non-empty")
    return x, y


def _exponent_values(family: ChannelFamily, er_star) -> np.ndarray:
    if callable(er_star):
        keys = family.thetas if family.is_bsc else family.channels
        return np.array([float(er_star(k)) for k in keys])
    vals = np.asarray(er_star, dtype=float)
    if vals.shape != (len(family),):
        raise ValueError("one exponent per family member required")
    return vals


def f_metric(x, y, family: ChannelFamily, xi: float,
             er_star: Callable | Sequence[float]) -> float:
    """``max_theta [(1/N) ln P_theta(y|x) + xi E*(theta)]`` through the joint type.

    ``er_star`` is either one value per family member or a callable taking a
    crossover probability (BSC families) or a :class:`Dmc`.
    """
    x, y = _check_pair(x, y)
    if not 0.0 <= xi <= 1.0:
        raise ValueError("xi must lie in [0, 1]")
    counts = joint_type(x, y, family.x_size, family.y_size).counts
    kind = DecoderKind("minimax", family=family, xi=xi,
                       exponents=tuple(_exponent_values(family, er_star)))
    return float(scores_from_counts(counts, kind))


def rho_metric(x, y) -> float:
    """``min(delta, 1 - delta)`` for the normalized Hamming distance ``delta``."""
    x, y = _check_pair(x, y)
    if np.any((x != 0) & (x != 1)) or np.any((y != 0) & (y != 1)):
        raise ValueError("rho metric needs binary sequences")
    d = int(np.count_nonzero(x != y))
    return min(d, x.size - d) / x.size


def mmi_metric(x, y) -> float:
    """Empirical mutual information of the joint type."""
    x, y = _check_pair(x, y)
    return mutual_information(joint_type(x, y).to_joint_pmf())


def metrics_equal(a: float, b: float) -> bool:
    """Float tie test used by every decision rule."""
    if a == b:
        return True
    return abs(a - b) <= TIE_RTOL * max(1.0, abs(a), abs(b))


# --------------------------------------------------------------------------
# decisions


def _tie_mask(scores: np.ndarray, exact: bool) -> np.ndarray:
    best = np.max(scores, axis=-1, keepdims=True)
    if exact:
        return scores == best
    with np.errstate(invalid="ignore"):
        tol = TIE_RTOL * np.maximum(1.0, np.abs(best))
        mask = scores >= best - tol
    return np.where(np.isneginf(best), np.isneginf(scores), mask)


def decide(scores: np.ndarray, kind: DecoderKind, rng: np.random.Generator | None = None,
           u: np.ndarray | None = None):
    """Apply the tie policy to ``(..., M)`` scores; returns ``(chosen, tied)``.

    The randomized policy uses uniforms ``u`` (one per decision) when given,
    otherwise draws them from ``rng``.
    """
    mask = _tie_mask(scores, kind.exact_scores)
    n_best = mask.sum(axis=-1)
    tied = n_best >= 2
    first = np.argmax(mask, axis=-1)
    if kind.tie_policy == "lowest":
        chosen = first
    elif kind.tie_policy == "error":
        chosen = np.where(tied, ERROR, first)
    else:
        if u is None:
            rng = rng if rng is not None else np.random.default_rng(kind.seed)
            u = rng.random(n_best.shape)
        pick = np.floor(np.asarray(u) * n_best).astype(np.int64)
        order = np.cumsum(mask, axis=-1) - 1
        chosen = np.argmax(mask & (order == pick[..., None]), axis=-1)
    return chosen, tied


def decode_batch(words, Y, kind: DecoderKind, rng: np.random.Generator | None = None,
                 u: np.ndarray | None = None):
    """Decode each row of ``Y`` against ``words`` (``(M, N)`` or per-row ``(B, M, N)``)."""
    xs, ys = kind.alphabet()
    counts = batch_counts(words, Y, xs, ys)
    return decide(scores_from_counts(counts, kind), kind, rng, u)


def decode_block(cb: Codebook, y, kind: DecoderKind,
                 rng: np.random.Generator | None = None) -> DecodeOutcome:
    y = np.asarray(y)
    if y.shape != (cb.N,):
        raise ValueError(f"received word must have length {cb.N}")
    xs, ys = kind.alphabet()
    counts = batch_counts(cb.words, y, xs, ys)
    scores = scores_from_counts(counts, kind)
    chosen, tied = decide(scores, kind, rng)
    return DecodeOutcome(int(chosen), bool(tied), metric_values(counts, kind))


# --------------------------------------------------------------------------
# sklearn-style estimators


class _BlockDecoder(BaseEstimator):
    """Fit stores the codebook; predict returns message indices (``-1`` for ERROR)."""

    def _kind(self) -> DecoderKind:
        raise NotImplementedError

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.int64)
        self.codebook_ = Codebook(X, x_size=self._x_size())
        self.kind_ = self._kind()
        return self

    def _x_size(self) -> int:
        return 2

    def _check_received(self, Y):
        check_is_fitted(self, "codebook_")
        Y = check_array(Y, dtype=np.int64)
        if Y.shape[1] != self.codebook_.N:
            raise ValueError(f"received words must have length {self.codebook_.N}")
        return Y

    def decision_function(self, Y) -> np.ndarray:
        """Per-candidate scores, larger is better."""
        Y = self._check_received(Y)
        xs, ys = self.kind_.alphabet()
        return scores_from_counts(batch_counts(self.codebook_.words, Y, xs, ys), self.kind_)

    def predict(self, Y) -> np.ndarray:
        rng = np.random.default_rng(getattr(self, "random_state", None))
        return decide(self.decision_function(Y), self.kind_, rng)[0]


class MLDecoder(_BlockDecoder):
    def __init__(self, channel: Dmc | None = None, tie_policy: str = "lowest", random_state=None):
        self.channel = channel
        self.tie_policy = tie_policy
        self.random_state = random_state

    def _x_size(self):
        return self.channel.x_size

    def _kind(self):
        return DecoderKind.ml(self.channel, self.tie_policy, self.random_state)


class MinimaxDecoder(_BlockDecoder):
    """Minimax f-metric decoder; ``rate=None`` uses the fitted codebook's rate."""

    def __init__(self, family: ChannelFamily | None = None, xi: float = 1.0, rate: float | None = None,
                 tie_policy: str = "lowest", random_state=None):
        self.family = family
        self.xi = xi
        self.rate = rate
        self.tie_policy = tie_policy
        self.random_state = random_state

    def _x_size(self):
        return self.family.x_size

    def _kind(self):
        R = self.codebook_.rate if self.rate is None else self.rate
        return DecoderKind.minimax(self.family, self.xi, R, tie_policy=self.tie_policy,
                                   seed=self.random_state)


class RhoDecoder(_BlockDecoder):
    def __init__(self, tie_policy: str = "lowest", random_state=None):
        self.tie_policy = tie_policy
        self.random_state = random_state

    def _kind(self):
        return DecoderKind.rho(self.tie_policy, self.random_state)


class MMIDecoder(_BlockDecoder):
    def __init__(self, tie_policy: str = "lowest", random_state=None):
        self.tie_policy = tie_policy
        self.random_state = random_state

    def _kind(self):
        return DecoderKind.mmi(self.tie_policy, self.random_state)


# --------------------------------------------------------------------------
# Viterbi


@dataclass(frozen=True)
class BranchMetric:
    """``hamming`` distance or ``negloglik`` of a BSC with crossover ``theta``."""

    kind: str = "hamming"
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in ("hamming", "negloglik"):
            raise ValueError("branch metric must be 'hamming' or 'negloglik'")
        if self.kind == "negloglik" and not (self.theta is not None and 0 < self.theta < 1):
            raise ValueError("negloglik needs a crossover probability in (0, 1)")

    def cost(self, d: np.ndarray, n: int) -> np.ndarray:
        if self.kind == "hamming":
            return d
        return -(d * math.log(self.theta) + (n - d) * math.log1p(-self.theta))


def viterbi_batch(trellis: Trellis, Y, metric: BranchMetric = BranchMetric(),
                  sense: str = "min", labels: np.ndarray | None = None):
    """Add-compare-select over a batch of received words.

    ``labels`` overrides ``trellis.labels`` with per-row labels
    ``(B, T, S, U, n)``, which lets every row use its own time-varying code.
    Returns ``(info bits (B, b L), totals (B,))``. Ties go to the
    lowest-index predecessor.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    Y = np.atleast_2d(np.asarray(Y, dtype=np.uint8))
    b, n, L = trellis.b, trellis.n, trellis.L
    labels = trellis.labels[None] if labels is None else labels
    T, S = labels.shape[1], labels.shape[2]
    if Y.shape[1] != n * T:
        raise ValueError(f"received word must have length {n * T}, got {Y.shape[1]}")
    B = Y.shape[0]
    worst = np.inf if sense == "min" else -np.inf
    pick = np.argmin if sense == "min" else np.argmax
    ps, pu = trellis.pred_state, trellis.pred_input
    tail_block = pu != 0
    pm = np.full((B, S), worst)
    pm[:, 0] = 0.0
    dec = np.empty((T, B, S), np.uint8)
    rows = np.arange(B)[:, None]
    for t in range(T):
        yt = Y[:, t * n:(t + 1) * n]
        d = np.count_nonzero(labels[:, t] != yt[:, None, None, :], axis=-1)
        c = metric.cost(d, n)
        c = np.broadcast_to(c, (B,) + c.shape[1:])
        cand = pm[:, ps] + c[:, ps, pu]
        if t >= L:
            cand = np.where(tail_block, worst, cand)
        h = pick(cand, axis=2)
        dec[t] = h
        pm = np.take_along_axis(cand, h[..., None], axis=2)[..., 0]
    totals = pm[:, 0].copy()
    s = np.zeros(B, np.int64)
    blocks = np.empty((B, L), np.int64)
    for t in range(T - 1, -1, -1):
        h = dec[t, rows[:, 0], s]
        u = pu[s, h]
        if t < L:
            blocks[:, t] = u
        s = ps[s, h]
    info = message_bits(blocks, b).reshape(B, L * b)
    return info, totals


def viterbi_min(trellis: Trellis, y, metric: BranchMetric = BranchMetric(), sense: str = "min"):
    """Single received word; returns ``(info bits, total metric)``."""
    info, totals = viterbi_batch(trellis, np.asarray(y)[None], metric, sense)
    return info[0], float(totals[0])


def viterbi_two_trellis_batch(trellis: Trellis, Y, labels: np.ndarray | None = None):
    """Minimum- and maximum-distance passes; keep the survivor farther from 1/2.

    Returns ``(info (B, b L), rho (B,))``; ties go to the minimum-distance
    survivor.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.uint8))
    n_total = Y.shape[1]
    lo_info, d_min = viterbi_batch(trellis, Y, BranchMetric(), "min", labels)
    hi_info, d_max = viterbi_batch(trellis, Y, BranchMetric(), "max", labels)
    use_max = (n_total - d_max) < d_min
    info = np.where(use_max[:, None], hi_info, lo_info)
    rho = np.minimum(d_min, n_total - d_max) / n_total
    return info, rho


def viterbi_two_trellis(trellis: Trellis, y):
    info, rho = viterbi_two_trellis_batch(trellis, np.asarray(y)[None])
    return info[0], float(rho[0])
