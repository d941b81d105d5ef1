"""Random-coding exponent functionals.

Gallager's E0, the BSC closed forms built on ``V(theta, alpha)``, the
coding-distribution penalty ``delta_star``, the type functionals ``A`` and
``B``, and the convolutional-code path bounds. Everything is in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .channels import Dmc
from .probcore import JointPmf, Pmf, entropy, kl, mutual_information

LN2 = math.log(2.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(fn, lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    """Maximize a concave scalar function on ``[lo, hi]``.

    Returns ``(argmax, max)``. The endpoints are compared explicitly so that
    boundary maximizers are returned exactly.
    """
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    best = (x, fn(x))
    for edge in (lo, hi):
        val = fn(edge)
        if val >= best[1]:
            best = (edge, val)
    return best


def gallager_e0(w: Dmc, q: Pmf, rho: float) -> float:
    """Gallager's function ``E0(rho, q)`` for channel ``w``."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if q.size != w.x_size:
        raise ValueError("input distribution does not match the channel")
    if rho == 0:
        return 0.0
    inner = q.probs @ np.power(w.w, 1.0 / (1.0 + rho))
    return float(-np.log(np.sum(np.power(inner, 1.0 + rho))))


@dataclass(frozen=True)
class ErCurve:
    """Random-coding exponent at one ``(theta, rate)`` and its maximizing rho."""

    theta: float
    R: float
    value: float
    rho_hat: float


def random_coding_exponent(w: Dmc, q: Pmf, R: float, tol: float = 1e-10) -> tuple[float, float]:
    """``max_{0<=rho<=1} E0(rho, q) - rho R``; returns ``(value, rho_hat)``."""
    rho_hat, value = golden_section_max(lambda r: gallager_e0(w, q, r) - r * R, 0.0, 1.0, tol)
    if value <= 0.0:
        return 0.0, 0.0
    return value, rho_hat


def bsc_V(theta, alpha):
    """``ln[(1 - theta)^alpha + theta^alpha]``; vectorizes over numpy arrays."""
    theta = np.asarray(theta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(np.power(1.0 - theta, alpha) + np.power(theta, alpha))
    return float(out) if out.ndim == 0 else out


def bsc_Er(theta, rho, R):
    """``E_r(theta, rho)`` with the uniform input; defined for any ``rho >= 0``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be non-negative")
    out = rho * LN2 - (1.0 + rho) * bsc_V(theta, 1.0 / (1.0 + rho)) - rho * R
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=65536)
def _bsc_er_star_folded(theta: float, R: float) -> tuple[float, float]:
    rho_hat, value = golden_section_max(lambda r: bsc_Er(theta, r, R), 0.0, 1.0)
    if value <= 0.0:
        return 0.0, 0.0
    return value, rho_hat


def bsc_Er_star(theta: float, R: float) -> ErCurve:
    """Maximize ``bsc_Er`` over ``rho in [0, 1]`` by golden-section search.

    The value is symmetric in ``theta <-> 1 - theta``; both are evaluated at
    ``min(theta, 1 - theta)`` so mirrored grid points agree bit for bit.
    """
    theta = float(theta)
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if R < 0:
        raise ValueError("rate must be non-negative")
    value, rho_hat = _bsc_er_star_folded(min(theta, 1.0 - theta), float(R))
    return ErCurve(theta, float(R), value, rho_hat)


# --------------------------------------------------------------------------
# coding-distribution penalty


@dataclass(frozen=True)
class DeltaStarSpec:
    """Limit penalty of a random-coding distribution.

    ``kind`` is one of ``"uniform"``, ``"iid"``, ``"neighborhood"``, ``"linear"``.
    """

    kind: str
    q: Pmf | None = None
    p0: Pmf | None = None
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "iid", "neighborhood", "linear"):
            raise ValueError(f"unknown delta kind {self.kind!r}")
        if self.kind == "iid" and self.q is None:
            raise ValueError("iid delta needs a reference pmf q")
        if self.kind == "neighborhood":
            if self.p0 is None:
                raise ValueError("neighborhood delta needs a centre pmf p0")
            if self.radius < 0:
                raise ValueError("neighborhood radius must be >= 0")

    @classmethod
    def uniform(cls) -> "DeltaStarSpec":
        return cls("uniform")

    @classmethod
    def iid(cls, q: Pmf) -> "DeltaStarSpec":
        return cls("iid", q=q)

    @classmethod
    def neighborhood(cls, p0: Pmf, radius: float) -> "DeltaStarSpec":
        return cls("neighborhood", p0=p0, radius=float(radius))

    @classmethod
    def linear(cls) -> "DeltaStarSpec":
        return cls("linear")

    @property
    def is_iid(self) -> bool:
        return self.kind in ("uniform", "iid", "linear")

    def reference(self, x_size: int) -> Pmf:
        """The single-letter coding pmf behind an i.i.d.-type penalty."""
        if self.kind == "iid":
            if self.q.size != x_size:
                raise ValueError("alphabet mismatch")
            return self.q
        if self.kind == "linear":
            if x_size != 2:
                raise ValueError("linear ensembles are binary")
            return Pmf.uniform(2)
        if self.kind == "uniform":
            return Pmf.uniform(x_size)
        raise ValueError("neighborhood penalty has no i.i.d. reference")

    def coding_pmf(self, x_size: int) -> Pmf:
        """Single-letter pmf used for the ML random-coding exponent."""
        return self.p0 if self.kind == "neighborhood" else self.reference(x_size)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.q is not None:
            d["q"] = self.q.to_list()
        if self.p0 is not None:
            d["p0"] = self.p0.to_list()
            d["radius"] = self.radius
        return d


def total_variation(p: Pmf, q: Pmf) -> float:
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def delta_star(spec: DeltaStarSpec, p: Pmf) -> float:
    """Evaluate the penalty at ``p`` (may be ``+inf``)."""
    if spec.kind == "uniform":
        return max(math.log(p.size) - entropy(p), 0.0)
    if spec.kind == "linear":
        if p.size != 2:
            raise ValueError("linear ensembles are binary")
        return max(LN2 - entropy(p), 0.0)
    if spec.kind == "iid":
        return kl(p, spec.q)
    if p.size != spec.p0.size:
        raise ValueError("alphabet mismatch")
    return 0.0 if total_variation(p, spec.p0) <= spec.radius + 1e-12 else math.inf


# --------------------------------------------------------------------------
# type functionals


def expected_log_likelihood(w: Dmc, j: JointPmf) -> float:
    """``E ln w(Y|X)`` under ``j``; ``-inf`` if mass sits on a zero transition."""
    if j.shape != w.w.shape:
        raise ValueError("joint pmf does not match the channel alphabets")
    pos = j.probs > 0
    if np.any(w.w[pos] == 0):
        return -math.inf
    return float(np.sum(j.probs[pos] * np.log(w.w[pos])))


def A_func(w: Dmc, alpha: float, j: JointPmf, spec: DeltaStarSpec) -> float:
    """``I(X;Y) + delta*(P_X) - alpha E ln w(Y|X)``."""
    penalty = delta_star(spec, j.marginal_x())
    if math.isinf(penalty):
        return math.inf
    ell = expected_log_likelihood(w, j)
    if alpha == 0:
        tilt = 0.0
    elif math.isinf(ell):
        tilt = math.inf if alpha > 0 else -math.inf
    else:
        tilt = -alpha * ell
    return mutual_information(j) + penalty + tilt


def scaled_log_w(log_w: np.ndarray, alpha) -> np.ndarray:
    """``alpha * ln w`` with ``0 * ln 0 = 0`` and signed infinities elsewhere."""
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(invalid="ignore"):
        out = alpha * log_w
    zero = np.isneginf(log_w) & (alpha == 0)
    return np.where(zero, 0.0, out)


def gibbs_log_partition(w: np.ndarray, q: np.ndarray, alpha) -> np.ndarray:
    """``-ln sum_a q(a) w(b|a)^alpha`` per output symbol ``b``.

    ``alpha`` may be an array; the result then has shape ``alpha.shape + (|Y|,)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
        log_q = np.log(q)
    terms = scaled_log_w(log_w, alpha[..., None, None]) + log_q[:, None]
    return -logsumexp(terms, axis=-2)


def min_A_over_conditional(w: Dmc, alpha: float, p_y: Pmf, spec: DeltaStarSpec) -> float:
    """Closed-form ``min_{P_X|Y} A`` for i.i.d.-type penalties.

    With ``delta* = D(.||q)`` the objective equals the conditional divergence
    of ``P_X|Y`` from the tilted kernel ``q(a) w(b|a)^alpha``, whose minimum is
    the negative log-partition averaged over ``p_y``.
    """
    if not spec.is_iid:
        raise ValueError("closed form needs an i.i.d.-type penalty; use min_A_general")
    if p_y.size != w.y_size:
        raise ValueError("output pmf does not match the channel")
    q = spec.reference(w.x_size).probs
    g = gibbs_log_partition(w.w, q, alpha)
    pos = p_y.probs > 0
    return float(np.sum(p_y.probs[pos] * g[pos]))


def gibbs_minimizer(w: Dmc, alpha: float, spec: DeltaStarSpec) -> np.ndarray:
    """The conditional ``P_X|Y`` attaining :func:`min_A_over_conditional`."""
    q = spec.reference(w.x_size).probs
    with np.errstate(divide="ignore"):
        log_kern = np.log(q)[:, None] + scaled_log_w(w.log_w(), alpha)
    return np.exp(log_kern - logsumexp(log_kern, axis=0, keepdims=True))


_STEPS = 0.5 ** np.arange(80)


def _semi_dual(log_k: np.ndarray, f: np.ndarray, row: np.ndarray, col: np.ndarray):
    """Semi-dual value and column posteriors ``P(x | y)`` at row potentials ``f``."""
    z = log_k + f[:, :, None]
    top = z.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.exp(z - top)
    tot = e.sum(axis=1, keepdims=True)
    post = e / np.where(tot > 0, tot, 1.0)
    log_z = (np.log(tot) + top)[:, 0, :]
    lin = np.where(row > 0, row * f, 0.0).sum(axis=1)
    return lin - np.where(col > 0, col * log_z, 0.0).sum(axis=1), post


def log_sinkhorn_kl(log_kernel: np.ndarray, row: np.ndarray, col: np.ndarray,
                    tol: float = 1e-13, max_iter: int = 500) -> np.ndarray:
    """Batched ``min KL(P || K)`` over couplings with marginals ``row`` and ``col``.

    Parameters
    ----------
    log_kernel : ndarray, shape (B, X, Y)
        Log of the (unnormalized) kernel; ``-inf`` marks forbidden cells.
    row, col : ndarray, shapes (B, X) and (B, Y)

    Returns
    -------
    ndarray, shape (B,)
        ``+inf`` where no coupling supported on the kernel exists.

    Notes
    -----
    Solves the semi-dual (row potentials only, column scaling in closed
    form) by damped Newton steps. Unlike plain Sinkhorn scaling this
    converges quickly however peaked the kernel is. Each batch entry stops
    on its own, so a result does not depend on what else shares the batch.
    """
    log_k = np.asarray(log_kernel, dtype=float)
    row = np.asarray(row, dtype=float)
    col = np.asarray(col, dtype=float)
    B, X, _ = log_k.shape
    live_r = row > 0
    live = live_r[:, :, None] & (col > 0)[:, None, :]
    log_k = np.where(live, log_k, -np.inf)
    support = np.isfinite(log_k)
    feasible = ~(np.any(live_r & ~support.any(axis=2), axis=1)
                 | np.any((col > 0) & ~support.any(axis=1), axis=1))
    f = np.where(live_r, 0.0, -np.inf)
    err = np.full(B, np.inf)
    active = feasible.copy()
    eye = np.eye(X)

    def objective(idx, fv):
        return _semi_dual(log_k[idx], fv, row[idx], col[idx])

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(max_iter):
            # runaway potentials mean the marginals cannot be met on the support
            active &= np.abs(np.where(np.isfinite(f), f, 0.0)).max(axis=1) <= 1e12
            a = np.flatnonzero(active)
            if a.size == 0:
                break
            fa = f[a]
            val, post = objective(a, fa)
            ca = col[a]
            rows_now = (post * ca[:, None, :]).sum(axis=2)
            grad = np.where(live_r[a], row[a] - rows_now, 0.0)
            err[a] = np.abs(grad).sum(axis=1)
            done = err[a] < tol
            active[a[done]] = False
            keep = ~done
            if not keep.any():
                break
            a, fa, grad, post, ca, val = a[keep], fa[keep], grad[keep], post[keep], ca[keep], val[keep]
            # negative Hessian: diag(rows) - sum_y c_y post_y post_y^T, plus the gauge direction
            wpost = post * np.sqrt(ca)[:, None, :]
            neg_h = np.einsum("bx,xz->bxz", rows_now[keep], eye) - wpost @ wpost.transpose(0, 2, 1)
            lv = live_r[a].astype(float)
            gauge = lv[:, :, None] * lv[:, None, :] / np.maximum(lv.sum(1), 1)[:, None, None]
            neg_h = neg_h + gauge + np.einsum("bx,xz->bxz", 1.0 - lv, eye)
            step = np.linalg.solve(neg_h + 1e-14 * eye, grad[..., None])[..., 0]
            step = np.where(live_r[a], step, 0.0)
            slope = (grad * step).sum(axis=1)
            full = np.where(live_r[a], fa + step, -np.inf)
            f_val, _ = objective(a, full)
            take = f_val >= val + 1e-4 * slope
            f[a[take]] = full[take]
            # otherwise: best point on a geometric ladder of step sizes
            rest = np.flatnonzero(~take)
            if rest.size == 0:
                continue
            a, fa, step, val = a[rest], fa[rest], step[rest], val[rest]
            trial = np.where(live_r[a][:, None, :],
                             fa[:, None, :] + _STEPS[None, :, None] * step[:, None, :], -np.inf)
            t_val, _ = objective(np.repeat(a, _STEPS.size), trial.reshape(-1, X))
            t_val = np.where(np.isnan(t_val), -np.inf, t_val).reshape(a.size, _STEPS.size)
            best = np.argmax(t_val, axis=1)
            moved = t_val[np.arange(a.size), best] > val
            # near the optimum the value stops resolving progress; trust the full step
            polish = ~moved & (err[a] < 1e-4)
            best[polish] = 0
            moved |= polish
            f[a[moved]] = trial[moved, best[moved]]
            active[a[~moved]] = False
        _, post = objective(np.arange(B), f)
        P = post * col[:, None, :]
        log_p = np.log(P)
        terms = np.where(P > 0, P * (log_p - log_k), 0.0)
    out = terms.sum(axis=(1, 2))
    out[~feasible | (err > 1e-8)] = np.inf
    return out


def sinkhorn_min(kernel: np.ndarray, row: np.ndarray, col: np.ndarray,
                 tol: float = 1e-13, max_iter: int = 20_000) -> float:
    """``min KL(P || kernel)`` over couplings with the given marginals.

    Returns ``+inf`` when no coupling supported on the kernel exists.
    """
    with np.errstate(divide="ignore"):
        log_k = np.log(np.asarray(kernel, dtype=float))
    return float(log_sinkhorn_kl(log_k[None], np.asarray(row, float)[None],
                                 np.asarray(col, float)[None], tol, max_iter)[0])


def _fixed_input_batch(w: Dmc, alphas: np.ndarray, p_x: np.ndarray, p_y: np.ndarray) -> np.ndarray:
    """``min_A_fixed_input`` for every ``(alpha, p_x row)``; shape (A, C)."""
    with np.errstate(divide="ignore"):
        log_px, log_py = np.log(p_x), np.log(p_y)
    tilt = scaled_log_w(w.log_w(), alphas[:, None, None])          # (A, X, Y)
    log_k = log_px[None, :, :, None] + log_py[None, None, None, :] + tilt[:, None]
    A, C = alphas.size, p_x.shape[0]
    rows = np.broadcast_to(p_x[None], (A, C, p_x.shape[1])).reshape(A * C, -1)
    cols = np.broadcast_to(p_y, (A * C, p_y.size))
    return log_sinkhorn_kl(log_k.reshape(A * C, *log_k.shape[2:]), rows, cols).reshape(A, C)


def min_A_fixed_input(w: Dmc, alpha: float, p_x: Pmf, p_y: Pmf) -> float:
    """``min I(X;Y) - alpha E ln w`` over joints with marginals ``p_x`` and ``p_y``."""
    return float(_fixed_input_batch(w, np.array([float(alpha)]), p_x.probs[None], p_y.probs)[0, 0])


def simplex_grid(dim: int, k: int) -> np.ndarray:
    """All pmfs on ``dim`` symbols whose entries are multiples of ``1/(k-1)``."""
    if dim < 1 or k < 2:
        raise ValueError("need dim >= 1 and k >= 2")
    steps = k - 1
    pts = []

    def rec(prefix, remaining, left):
        if left == 1:
            pts.append(prefix + [remaining])
            return
        for i in range(remaining + 1):
            rec(prefix + [i], remaining - i, left - 1)

    rec([], steps, dim)
    return np.array(pts, dtype=float) / steps


def _input_candidates(spec: DeltaStarSpec, x_size: int, k: int) -> np.ndarray:
    if spec.radius == 0:
        return spec.p0.probs[None]
    grid = simplex_grid(x_size, k)
    near = 0.5 * np.abs(grid - spec.p0.probs).sum(axis=1) <= spec.radius + 1e-12
    return np.vstack([grid[near], spec.p0.probs])


def min_A_general_batch(w: Dmc, alphas, p_y: Pmf, spec: DeltaStarSpec, k: int = 41) -> np.ndarray:
    """:func:`min_A_general` evaluated for an array of ``alphas``."""
    alphas = np.asarray(alphas, dtype=float)
    if spec.is_iid:
        return np.array([min_A_over_conditional(w, float(a), p_y, spec) for a in alphas.ravel()]
                        ).reshape(alphas.shape)
    cand = _input_candidates(spec, w.x_size, k)
    vals = _fixed_input_batch(w, alphas.ravel(), cand, p_y.probs)
    return vals.min(axis=1).reshape(alphas.shape)


def min_A_general(w: Dmc, alpha: float, p_y: Pmf, spec: DeltaStarSpec, k: int = 41) -> float:
    """``min_{P_X|Y} A`` for any penalty.

    Splits the search into the input marginal (grid, or the centre alone for
    a zero-radius neighbourhood) and a Sinkhorn solve for the coupling.
    Inside a neighbourhood the penalty is zero, so only the coupling term
    remains.
    """
    if spec.is_iid:
        return min_A_over_conditional(w, alpha, p_y, spec)
    return float(min_A_general_batch(w, np.array([alpha]), p_y, spec, k)[0])


def B_func(w_theta: Dmc, w_theta_p: Dmc, p_y: Pmf, cond, cond_p, s: float, rho: float,
           spec: DeltaStarSpec) -> float:
    """``A(theta, 1 - s rho, P_XY) + rho A(theta', s, P_X'Y) - H(Y)``."""
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    if s < 0:
        raise ValueError("s must be non-negative")
    j = JointPmf.from_conditional(p_y, cond)
    jp = JointPmf.from_conditional(p_y, cond_p)
    first = A_func(w_theta, 1.0 - s * rho, j, spec)
    second = 0.0 if rho == 0 else rho * A_func(w_theta_p, s, jp, spec)
    return first + second - entropy(p_y)


# --------------------------------------------------------------------------
# convolutional-code bounds


def conv_cutoff_R0(w: Dmc) -> float:
    """Bhattacharyya cutoff rate with the uniform binary input."""
    if w.x_size != 2:
        raise ValueError("cutoff rate defined for binary-input channels")
    inner = 0.5 * np.sqrt(w.w).sum(axis=0)
    return float(-np.log(np.sum(inner ** 2)))


def conv_E0(w: Dmc, rho: float) -> float:
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    if w.x_size != 2:
        raise ValueError("binary-input channel required")
    return gallager_e0(w, Pmf.uniform(2), rho)


def conv_path_bound(b: int, K: int, l: int, w: Dmc, rho: float, n: int) -> float:
    """Averaged bound on the paths diverging for ``K + l`` branches.

    ``(2^b - 1) 2^{b l rho} exp(-(K + l) n E0(rho))``.
    """
    if b < 1 or K < 1 or l < 0 or n < 1:
        raise ValueError("need b, K, n >= 1 and l >= 0")
    e0 = conv_E0(w, rho)
    return float((2 ** b - 1) * 2.0 ** (b * l * rho) * math.exp(-(K + l) * n * e0))


def incorrect_path_count_bound(b: int, l: int) -> int:
    return (2 ** b - 1) * 2 ** (b * l)


def bsc_exponent_table(thetas, R: float) -> np.ndarray:
    """``E_r*(theta)`` for each theta of a BSC grid."""
    return np.array([bsc_Er_star(t, R).value for t in thetas])


def dmc_exponent_table(channels, q: Pmf, R: float) -> np.ndarray:
    """``E_r*`` for each channel of a general family under input pmf ``q``."""
    out = []
    for w in channels:
        if w.x_size == 2 and w.y_size == 2 and w.w[0, 1] == w.w[1, 0] \
                and np.allclose(q.probs, 0.5) and 0 < w.w[0, 1] < 1:
            out.append(bsc_Er_star(w.w[0, 1], R).value)
        else:
            out.append(random_coding_exponent(w, q, R)[0])
    return np.array(out)

