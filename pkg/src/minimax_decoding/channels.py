"""Discrete memoryless channels, parameter grids and channel capacity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .probcore import PMF_ATOL, JointPmf, Pmf, mutual_information

DEFAULT_BSC_LO = 0.001
DEFAULT_BSC_HI = 0.499
DEFAULT_BSC_STEP = 0.0125


@dataclass(frozen=True, eq=False)
class Dmc:
    """Transition matrix ``w[x, y] = P(y | x)``."""

    w: np.ndarray
    label: str = ""

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError(f"transition matrix must be 2-D, got shape {w.shape}")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("transition probabilities must be finite and non-negative")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > PMF_ATOL):
            raise ValueError("every row of a DMC must sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def x_size(self) -> int:
        return self.w.shape[0]

    @property
    def y_size(self) -> int:
        return self.w.shape[1]

    def row(self, x: int) -> Pmf:
        return Pmf(self.w[x])

    def joint(self, q: Pmf) -> JointPmf:
        """Input/output joint pmf when the input is drawn from ``q``."""
        if q.size != self.x_size:
            raise ValueError("input distribution does not match the channel")
        return JointPmf(q.probs[:, None] * self.w)

    def log_w(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.w)

    def __eq__(self, other):
        return isinstance(other, Dmc) and np.array_equal(self.w, other.w)

    def __hash__(self):
        return hash(self.w.tobytes())

    def to_dict(self) -> dict:
        return {"x_size": self.x_size, "y_size": self.y_size, "rows": self.w.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Dmc":
        w = np.asarray(d["rows"], dtype=float)
        if w.shape != (d["x_size"], d["y_size"]):
            raise ValueError("rows do not match x_size/y_size")
        return cls(w, label=d.get("label", ""))


def bsc(theta: float, allow_degenerate: bool = False) -> Dmc:
    """Binary symmetric channel with crossover probability ``theta``.

    ``allow_degenerate`` admits the endpoints 0 and 1, for fixtures only.
    """
    theta = float(theta)
    lo_ok = theta >= 0 if allow_degenerate else theta > 0
    hi_ok = theta <= 1 if allow_degenerate else theta < 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"crossover probability must lie in (0, 1), got {theta}")
    return Dmc(np.array([[1 - theta, theta], [theta, 1 - theta]]), label=f"bsc({theta:g})")


def noiseless(k: int = 2) -> Dmc:
    """Identity channel on ``k`` symbols (test fixture)."""
    return Dmc(np.eye(k), label=f"noiseless({k})")


def swap_involution(y_size: int = 2) -> np.ndarray:
    """Output map ``y -> y_size - 1 - y``; the 0 <-> 1 swap for binary outputs."""
    return np.arange(y_size)[::-1].copy()


def is_bios(w: Dmc, neg=None, atol: float = 1e-12) -> bool:
    """True iff ``P(y|0) == P(neg(y)|1)`` for every output ``y``."""
    if w.x_size != 2:
        raise ValueError("BIOS is defined for binary-input channels only")
    neg = swap_involution(w.y_size) if neg is None else np.asarray(neg, dtype=int)
    if neg.shape != (w.y_size,) or not np.array_equal(neg[neg], np.arange(w.y_size)):
        raise ValueError("neg must be an involution on the output alphabet")
    return bool(np.allclose(w.w[0], w.w[1][neg], rtol=0.0, atol=atol))


def transmit(w: Dmc, x, rng: np.random.Generator) -> np.ndarray:
    """Pass ``x`` through the channel, sampling each output symbol independently."""
    x = np.asarray(x, dtype=np.int64)
    if np.any(x < 0) or np.any(x >= w.x_size):
        raise ValueError("input symbol out of range")
    if w.x_size == 2 and w.y_size == 2 and w.w[0, 1] == w.w[1, 0]:
        # BSC fast path; theta == 0 copies exactly
        theta = w.w[0, 1]
        if theta == 0:
            return x.copy()
        return x ^ (rng.random(x.shape) < theta)
    cdf = np.cumsum(w.w, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(x.shape)
    rows = cdf[x]
    return (u[..., None] >= rows).sum(axis=-1).astype(np.int64)


def capacity(w: Dmc, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Channel capacity in nats via Blahut-Arimoto alternating maximization."""
    return blahut_arimoto(w, tol=tol, max_iter=max_iter)[0]


def blahut_arimoto(w: Dmc, tol: float = 1e-10, max_iter: int = 10_000) -> tuple[float, Pmf]:
    """Return ``(capacity, capacity-achieving input pmf)``.

    Stops once successive capacity estimates differ by less than ``tol``.
    """
    W = w.w
    logW = w.log_w()
    r = np.full(w.x_size, 1.0 / w.x_size)
    prev = -np.inf
    cap = 0.0
    for _ in range(max_iter):
        out = r @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            log_ratio = np.where(W > 0, logW - np.log(np.where(out > 0, out, 1.0))[None, :], 0.0)
        d = np.sum(W * log_ratio, axis=1)
        cap = float(np.log(np.sum(r * np.exp(d))))
        r = r * np.exp(d)
        r /= r.sum()
        if abs(cap - prev) < tol:
            break
        prev = cap
    r = np.clip(r, 0.0, None)
    q = Pmf(r / r.sum())
    return max(mutual_information(w.joint(q)), 0.0), q


@dataclass(frozen=True)
class ChannelFamily:
    """Finite parameter grid of channels.

    Build with :meth:`bsc_interval` or :meth:`explicit`. ``thetas`` holds the
    crossover probabilities for BSC families and ``None`` otherwise.
    """

    channels: tuple[Dmc, ...]
    labels: tuple[str, ...]
    thetas: tuple[float, ...] | None = None
    kind: str = "explicit"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.channels) == 0:
            raise ValueError("channel family grid must be non-empty")
        if len(self.labels) != len(self.channels):
            raise ValueError("one label per channel required")
        shapes = {c.w.shape for c in self.channels}
        if len(shapes) != 1:
            raise ValueError("all channels in a family must share alphabets")

    @classmethod
    def bsc_interval(cls, lo: float = DEFAULT_BSC_LO, hi: float = DEFAULT_BSC_HI,
                     step: float = DEFAULT_BSC_STEP) -> "ChannelFamily":
        if not (0 < lo <= hi < 1):
            raise ValueError("BSC interval requires 0 < lo <= hi < 1")
        if step <= 0:
            raise ValueError("grid step must be positive")
        count = int(np.floor((hi - lo) / step + 1e-9)) + 1
        thetas = tuple(round(lo + i * step, 12) for i in range(count))
        return cls.bsc_grid(thetas, kind="bsc_interval",
                            params={"lo": lo, "hi": hi, "step": step})

    @classmethod
    def bsc_grid(cls, thetas: Sequence[float], kind: str = "bsc_grid",
                 params: dict | None = None) -> "ChannelFamily":
        thetas = tuple(float(t) for t in thetas)
        return cls(tuple(bsc(t) for t in thetas), tuple(f"{t:g}" for t in thetas),
                   thetas=thetas, kind=kind, params=params or {"thetas": list(thetas)})

    @classmethod
    def bsc_symmetric(cls, step: float) -> "ChannelFamily":
        """BSC grid over (0, 1) closed under ``theta -> 1 - theta``."""
        count = int(round(1.0 / step))
        if count < 2 or abs(count * step - 1.0) > 1e-9:
            raise ValueError("step must divide 1 into at least two cells")
        thetas = [round(i / count, 12) for i in range(1, count)]
        return cls.bsc_grid(thetas, kind="bsc_symmetric", params={"step": step})

    @classmethod
    def explicit(cls, channels: Sequence[Dmc], labels: Sequence[str] | None = None) -> "ChannelFamily":
        channels = tuple(channels)
        if labels is None:
            labels = tuple(c.label or str(i) for i, c in enumerate(channels))
        return cls(channels, tuple(labels))

    @property
    def is_bsc(self) -> bool:
        return self.thetas is not None

    @property
    def x_size(self) -> int:
        return self.channels[0].x_size

    @property
    def y_size(self) -> int:
        return self.channels[0].y_size

    def __len__(self):
        return len(self.channels)

    def grid(self) -> tuple[Dmc, ...]:
        return self.channels

    def subset(self, keep: Callable[[int], bool]) -> "ChannelFamily":
        idx = [i for i in range(len(self)) if keep(i)]
        if not idx:
            raise ValueError("channel family grid must be non-empty")
        thetas = None if self.thetas is None else tuple(self.thetas[i] for i in idx)
        return ChannelFamily(tuple(self.channels[i] for i in idx),
                             tuple(self.labels[i] for i in idx), thetas, self.kind, self.params)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, **self.params, "labels": list(self.labels)}
        if self.thetas is None:
            d["channels"] = [c.to_dict() for c in self.channels]
        else:
            d["thetas"] = list(self.thetas)
        return d
