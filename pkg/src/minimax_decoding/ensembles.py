"""Random code ensembles: i.i.d. block codes, linear codes and time-varying
convolutional codes with their trellises."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .probcore import Pmf


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Independent generator derived from a master seed and integer ids.

    The derivation is a hash of ``(seed, *ids)``, so stream ``(s, k)`` is the
    same no matter how work is partitioned.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, ids)]))


def _bits(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.uint8)
    if np.any(out > 1):
        raise ValueError(f"{name} must contain only 0/1 entries")
    return out


@dataclass(frozen=True, eq=False)
class Codebook:
    """``M x N`` array of codewords over ``range(x_size)``."""

    words: np.ndarray
    x_size: int = 2

    def __post_init__(self):
        words = np.array(self.words, dtype=np.int64)
        if words.ndim != 2:
            raise ValueError("codebook must be a 2-D array of codewords")
        if words.shape[0] < 2:
            raise ValueError("a codebook needs M >= 2 codewords")
        if words.shape[1] < 1:
            raise ValueError("codewords must have length N >= 1")
        if np.any(words < 0) or np.any(words >= self.x_size):
            raise ValueError("codeword symbol outside the input alphabet")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @property
    def M(self) -> int:
        return self.words.shape[0]

    @property
    def N(self) -> int:
        return self.words.shape[1]

    @property
    def rate(self) -> float:
        """``ln(M) / N`` in nats per symbol."""
        return float(np.log(self.M) / self.N)

    def to_dict(self) -> dict:
        return {"x_size": self.x_size, "words": self.words.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        return cls(np.asarray(d["words"]), d.get("x_size", 2))


def sample_iid_codebook(q: Pmf, M: int, N: int, rng: np.random.Generator) -> Codebook:
    """``M`` codewords of ``N`` i.i.d. symbols drawn from ``q``."""
    if M < 2:
        raise ValueError("a codebook needs M >= 2 codewords")
    words = rng.choice(q.size, size=(M, N), p=q.probs)
    return Codebook(words, x_size=max(q.size, 2))


def sample_type_class_codebook(counts, M: int, rng: np.random.Generator) -> Codebook:
    """Codewords drawn uniformly from the type class with symbol ``counts``."""
    counts = np.asarray(counts, dtype=np.int64)
    base = np.repeat(np.arange(counts.size), counts)
    words = np.stack([rng.permutation(base) for _ in range(M)])
    return Codebook(words, x_size=max(counts.size, 2))


# --------------------------------------------------------------------------
# linear codes


def message_bits(m, K: int) -> np.ndarray:
    """Binary expansion of message index ``m``, most significant bit first."""
    m = np.asarray(m, dtype=np.int64)
    return ((m[..., None] >> np.arange(K - 1, -1, -1)) & 1).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class LinearCodeSpec:
    """Affine code ``v = u G + v0`` over GF(2)."""

    g: np.ndarray
    v0: np.ndarray
    systematic: bool = False

    def __post_init__(self):
        g = _bits(self.g, "generator matrix")
        v0 = _bits(self.v0, "v0")
        if g.ndim != 2 or v0.shape != (g.shape[1],):
            raise ValueError("need a K x N generator and a length-N offset")
        K, N = g.shape
        if not 1 <= K < N:
            raise ValueError("need 1 <= K < N")
        if self.systematic and not np.array_equal(g[:, :K], np.eye(K, dtype=np.uint8)):
            raise ValueError("systematic code needs an identity left K x K block")
        g.setflags(write=False)
        v0.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "v0", v0)

    @property
    def K(self) -> int:
        return self.g.shape[0]

    @property
    def N(self) -> int:
        return self.g.shape[1]

    def codebook(self) -> Codebook:
        """All ``2^K`` codewords; row ``m`` encodes :func:`message_bits` of ``m``."""
        return Codebook(encode_linear(self, message_bits(np.arange(2 ** self.K), self.K)))

    def to_dict(self) -> dict:
        return {"g": self.g.tolist(), "v0": self.v0.tolist(), "systematic": self.systematic}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearCodeSpec":
        return cls(np.asarray(d["g"]), np.asarray(d["v0"]), bool(d.get("systematic", False)))


def sample_linear(K: int, N: int, systematic: bool, rng: np.random.Generator) -> LinearCodeSpec:
    """Fair-coin generator (only the parity block when systematic) and offset."""
    if not 1 <= K < N:
        raise ValueError("need 1 <= K < N")
    if systematic:
        g = np.concatenate([np.eye(K, dtype=np.uint8),
                            rng.integers(0, 2, size=(K, N - K), dtype=np.uint8)], axis=1)
    else:
        g = rng.integers(0, 2, size=(K, N), dtype=np.uint8)
    v0 = rng.integers(0, 2, size=N, dtype=np.uint8)
    return LinearCodeSpec(g, v0, systematic)


def encode_linear(spec: LinearCodeSpec, u) -> np.ndarray:
    """``u G xor v0``; ``u`` may carry leading batch dimensions."""
    u = _bits(u, "message")
    if u.shape[-1] != spec.K:
        raise ValueError(f"message must have {spec.K} bits, got {u.shape[-1]}")
    return ((u.astype(np.int64) @ spec.g.astype(np.int64) + spec.v0) & 1).astype(np.uint8)


# --------------------------------------------------------------------------
# convolutional codes


@dataclass(frozen=True, eq=False)
class ConvCodeSpec:
    """Time-varying feed-forward convolutional code terminated by ``K - 1`` zero branches.

    ``generators[t, j]`` is the ``b x n`` matrix applied to the info block
    entered ``j`` branches before time ``t``; ``v0[t]`` is the offset.
    """

    b: int
    n: int
    K: int
    L: int
    generators: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        for name in ("b", "n", "K", "L"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        g = _bits(self.generators, "generators")
        v0 = _bits(self.v0, "v0")
        T = self.L + self.K - 1
        if g.shape != (T, self.K, self.b, self.n):
            raise ValueError(f"generators must have shape {(T, self.K, self.b, self.n)}")
        if v0.shape != (T, self.n):
            raise ValueError(f"v0 must have shape {(T, self.n)}")
        g.setflags(write=False)
        v0.setflags(write=False)
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "v0", v0)

    @property
    def branches(self) -> int:
        return self.L + self.K - 1

    @property
    def rate_bits(self) -> float:
        return self.b / self.n

    @property
    def n_states(self) -> int:
        return 2 ** (self.b * (self.K - 1))

    @property
    def code_length(self) -> int:
        return self.n * self.branches

    def to_dict(self) -> dict:
        return {"b": self.b, "n": self.n, "K": self.K, "L": self.L,
                "generators": self.generators.tolist(), "v0": self.v0.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConvCodeSpec":
        return cls(d["b"], d["n"], d["K"], d["L"], np.asarray(d["generators"]), np.asarray(d["v0"]))


def sample_conv(b: int, n: int, K: int, L: int, rng: np.random.Generator,
                zero_offset: bool = False) -> ConvCodeSpec:
    """Fresh fair-coin generators and offsets at every time instant."""
    if min(b, n, K, L) < 1:
        raise ValueError("b, n, K, L must all be >= 1")
    T = L + K - 1
    g = rng.integers(0, 2, size=(T, K, b, n), dtype=np.uint8)
    v0 = np.zeros((T, n), np.uint8) if zero_offset else rng.integers(0, 2, size=(T, n), dtype=np.uint8)
    return ConvCodeSpec(b, n, K, L, g, v0)


def _info_blocks(spec: ConvCodeSpec, info) -> np.ndarray:
    info = _bits(info, "info bits")
    if info.shape[-1] != spec.b * spec.L:
        raise ValueError(f"need {spec.b * spec.L} info bits, got {info.shape[-1]}")
    blocks = info.reshape(info.shape[:-1] + (spec.L, spec.b))
    tail = np.zeros(info.shape[:-1] + (spec.K - 1, spec.b), np.uint8)
    return np.concatenate([blocks, tail], axis=-2)


def encode_conv(spec: ConvCodeSpec, info) -> np.ndarray:
    """Code bits ``v_t = sum_{j <= min(t, K-1)} u_{t-j} G_j(t) xor v0(t)``, zero tail included."""
    u = _info_blocks(spec, info).astype(np.int64)          # (..., T, b)
    T = spec.branches
    out = np.broadcast_to(spec.v0.astype(np.int64), u.shape[:-2] + (T, spec.n)).copy()
    g = spec.generators.astype(np.int64)
    for j in range(min(spec.K, T)):
        shifted = u[..., : T - j, :]                        # u_{t-j} for t = j .. T-1
        out[..., j:, :] += np.einsum("...tb,tbn->...tn", shifted, g[j:, j])
    return (out & 1).astype(np.uint8).reshape(u.shape[:-2] + (T * spec.n,))


@dataclass(frozen=True, eq=False)
class Trellis:
    """Transition tables of a terminated time-varying code.

    The state is the last ``K - 1`` info blocks with the newest in the low
    bits. ``next_state[s, u]`` is time-invariant; ``labels[t, s, u]`` holds
    the ``n`` output bits. Predecessors of every state are listed in
    ``pred_state``/``pred_input`` in increasing ``(s, u)`` order.
    """

    b: int
    n: int
    K: int
    L: int
    next_state: np.ndarray
    labels: np.ndarray
    pred_state: np.ndarray
    pred_input: np.ndarray

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def branches(self) -> int:
        return self.labels.shape[-4]


def _state_tables(b: int, K: int):
    S = 2 ** (b * (K - 1))
    U = 2 ** b
    s = np.arange(S)[:, None]
    u = np.arange(U)[None, :]
    nxt = ((s << b) | u) & (S - 1) if K > 1 else np.zeros((S, U), np.int64)
    pairs = sorted((int(nxt[si, ui]), si, ui) for si in range(S) for ui in range(U))
    pred_s = np.array([p[1] for p in pairs]).reshape(S, U)
    pred_u = np.array([p[2] for p in pairs]).reshape(S, U)
    return nxt, pred_s, pred_u


def branch_labels(b: int, n: int, K: int, L: int, generators, v0) -> np.ndarray:
    """Output labels ``(..., T, S, U, n)`` for batches of generator draws."""
    g = np.asarray(generators, dtype=np.int64)              # (..., T, K, b, n)
    v0 = np.asarray(v0, dtype=np.int64)                     # (..., T, n)
    T = L + K - 1
    S, U = 2 ** (b * (K - 1)), 2 ** b
    ubits = message_bits(np.arange(U), b).astype(np.int64)  # (U, b)
    out = np.einsum("ub,...tbn->...tun", ubits, g[..., 0, :, :])[..., None, :, :]
    out = out + v0[..., None, None, :]
    states = np.arange(S)
    t_idx = np.arange(T)
    for j in range(1, K):
        block = message_bits((states >> (b * (j - 1))) & (U - 1), b).astype(np.int64)  # (S, b)
        contrib = np.einsum("sb,...tbn->...tsn", block, g[..., j, :, :])
        contrib = contrib * (t_idx >= j)[:, None, None]
        out = out + contrib[..., :, :, None, :]
    return (out & 1).astype(np.uint8)


def build_trellis(spec: ConvCodeSpec) -> Trellis:
    nxt, pred_s, pred_u = _state_tables(spec.b, spec.K)
    labels = branch_labels(spec.b, spec.n, spec.K, spec.L, spec.generators, spec.v0)
    return Trellis(spec.b, spec.n, spec.K, spec.L, nxt, labels, pred_s, pred_u)


def trellis_walk(trellis: Trellis, info) -> np.ndarray:
    """Code bits obtained by following the trellis from the zero state."""
    info = _bits(info, "info bits")
    b, L, K = trellis.b, trellis.L, trellis.K
    weights = 1 << np.arange(b - 1, -1, -1)
    blocks = list(info.reshape(L, b) @ weights) + [0] * (K - 1)
    s = 0
    out = []
    for t, u in enumerate(blocks):
        out.append(trellis.labels[t, s, u])
        s = int(trellis.next_state[s, u])
    return np.concatenate(out)


def to_json(obj) -> str:
    return json.dumps(obj.to_dict(), sort_keys=True)
