"""Finite-alphabet probability primitives and information measures (nats)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PMF_ATOL = 1e-9


def _as_prob_array(probs, ndim: int, name: str) -> np.ndarray:
    arr = np.array(probs, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} entries must be finite and non-negative")
    if abs(arr.sum() - 1.0) > PMF_ATOL:
        raise ValueError(f"{name} must sum to 1 (got {arr.sum():.12g})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over ``range(len(probs))``.

    Invalid input is rejected rather than renormalized.
    """

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_prob_array(self.probs, 1, "Pmf"))

    @classmethod
    def uniform(cls, k: int) -> "Pmf":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def empirical(cls, x, size: int) -> "Pmf":
        """Empirical distribution of a symbol vector over ``range(size)``."""
        x = np.asarray(x)
        if x.size == 0:
            raise ValueError("empirical distribution needs at least one symbol")
        return cls(np.bincount(x.ravel(), minlength=size)[:size] / x.size)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, Pmf) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def to_list(self) -> list[float]:
        return self.probs.tolist()


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Joint distribution over X x Y stored as an ``(|X|, |Y|)`` matrix."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_prob_array(self.probs, 2, "JointPmf"))

    @classmethod
    def from_conditional(cls, p_y: Pmf, cond_x_given_y) -> "JointPmf":
        """Compose ``P_XY(a, b) = P_Y(b) P_{X|Y}(a|b)``.

        ``cond_x_given_y`` has shape ``(|X|, |Y|)`` with columns summing to 1.
        """
        cond = np.asarray(cond_x_given_y, dtype=float)
        if cond.shape[1] != p_y.size:
            raise ValueError("conditional has wrong number of output columns")
        if np.any(cond < 0) or np.any(np.abs(cond.sum(axis=0) - 1.0) > PMF_ATOL):
            raise ValueError("conditional columns must be probability vectors")
        return cls(cond * p_y.probs[None, :])

    @classmethod
    def product(cls, p_x: Pmf, p_y: Pmf) -> "JointPmf":
        return cls(np.outer(p_x.probs, p_y.probs))

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def marginal_x(self) -> Pmf:
        return Pmf(self.probs.sum(axis=1))

    def marginal_y(self) -> Pmf:
        return Pmf(self.probs.sum(axis=0))

    def conditional_x_given_y(self) -> np.ndarray:
        """``P_{X|Y}`` as an ``(|X|, |Y|)`` array; zero-mass columns are uniform."""
        py = self.probs.sum(axis=0)
        cond = np.full(self.shape, 1.0 / self.shape[0])
        pos = py > 0
        cond[:, pos] = self.probs[:, pos] / py[pos]
        return cond

    def flat(self) -> Pmf:
        return Pmf(self.probs.ravel())


@dataclass(frozen=True)
class TypeStats:
    """Joint type counts ``N_xy(a, b)`` of a pair of sequences of length ``n``."""

    counts: np.ndarray
    n: int

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if counts.sum() != self.n:
            raise ValueError("type counts must sum to n")

    def to_joint_pmf(self) -> JointPmf:
        return JointPmf(self.counts / self.n)


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p, dtype=float)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def entropy(p: Pmf) -> float:
    """Shannon entropy in nats with ``0 ln 0 = 0``."""
    probs = p.probs if isinstance(p, (Pmf, JointPmf)) else np.asarray(p, dtype=float)
    return float(max(-_xlogx(probs).sum(), 0.0))


def binary_entropy(t: float) -> float:
    return entropy(Pmf([t, 1.0 - t]))


def kl(p: Pmf, q: Pmf) -> float:
    """Divergence ``D(p || q)`` in nats; ``+inf`` when p is not dominated by q."""
    if p.size != q.size:
        raise ValueError(f"alphabet mismatch: {p.size} vs {q.size}")
    pp, qq = p.probs, q.probs
    pos = pp > 0
    if np.any(qq[pos] == 0):
        return float("inf")
    return float(max(np.sum(pp[pos] * np.log(pp[pos] / qq[pos])), 0.0))


def mutual_information(j: JointPmf) -> float:
    """``I(X;Y)`` of a joint pmf, in nats."""
    pxy = j.probs
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    pos = pxy > 0
    val = np.sum(pxy[pos] * np.log(pxy[pos] / (px * py)[pos]))
    return float(max(val, 0.0))


def conditional_divergence(cond: np.ndarray, q, p_y: Pmf) -> float:
    """``D(P_{X|Y} || q | P_Y)``: the P_Y-average of column divergences from q."""
    q = np.asarray(q.probs if isinstance(q, Pmf) else q, dtype=float)
    total = 0.0
    for b, weight in enumerate(p_y.probs):
        if weight > 0:
            total += weight * kl(Pmf(cond[:, b]), Pmf(q))
    return total


def _check_same_length(x: np.ndarray, y: np.ndarray):
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")


def joint_type(x, y, x_size: int | None = None, y_size: int | None = None) -> TypeStats:
    """Count matrix of symbol pairs ``(x_i, y_i)``."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    _check_same_length(x, y)
    if x.size == 0:
        raise ValueError("joint type needs n >= 1")
    if np.any(x < 0) or np.any(y < 0):
        raise ValueError("symbols must be non-negative integers")
    xs = int(x.max()) + 1 if x_size is None else x_size
    ys = int(y.max()) + 1 if y_size is None else y_size
    xs, ys = max(xs, 2), max(ys, 2)
    if x.max() >= xs or y.max() >= ys:
        raise ValueError("symbol outside alphabet")
    counts = np.bincount(x * ys + y, minlength=xs * ys).reshape(xs, ys)
    return TypeStats(counts, int(x.size))


def hamming(x, y) -> tuple[int, float]:
    """Hamming distance and its normalization by the length."""
    x = np.asarray(x)
    y = np.asarray(y)
    _check_same_length(x, y)
    d = int(np.count_nonzero(x != y))
    return d, d / x.size if x.size else 0.0
