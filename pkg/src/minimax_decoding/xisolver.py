"""Numerical evaluation of the achievable fraction xi of the ML exponent.

Three solvers share one grid-and-refine engine:

* :func:`xi_lb_bsc_closed_form` -- BSC families with the uniform ensemble,
  every distribution eliminated through ``V(theta, alpha)``;
* :func:`xi_lower_bound` -- the interchanged (lower-bound) expression for
  any finite DMC family;
* :func:`xi_exact` -- the two-branch expression, small alphabets only.

The weight ``mu = lambda * rho`` (or ``s * rho``) is gridded on ``[0, 1]``
instead of ``lambda`` on ``[0, 1/rho]``; at ``rho = 0`` only ``mu = 0`` is
admissible. The ``s >= 1/rho`` branch is gridded through ``v = 1/(s rho)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import __version__
from .channels import ChannelFamily, Dmc
from .exponents import (
    LN2,
    B_func,
    DeltaStarSpec,
    bsc_Er,
    bsc_V,
    delta_star,
    dmc_exponent_table,
    gibbs_minimizer,
    min_A_general,
    min_A_general_batch,
    scaled_log_w,
    simplex_grid,
)
from .probcore import JointPmf, Pmf, entropy, mutual_information

MODES = ("lb", "exact", "bsc-closed")
MAX_EXACT_ALPHABET = 4


class EmptyFamilyError(ValueError):
    """Every channel of the family has a vanishing ML exponent at this rate."""


@dataclass(frozen=True)
class XiGrids:
    p_y_points: int = 21
    conditional_points: int = 9
    rho_points: int = 61
    s_points: int = 61
    refinement_rounds: int = 3

    def __post_init__(self):
        for name in ("p_y_points", "conditional_points", "rho_points", "s_points"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if self.refinement_rounds < 0:
            raise ValueError("refinement_rounds must be >= 0")

    @classmethod
    def for_mode(cls, mode: str) -> "XiGrids":
        if mode == "bsc-closed":
            return cls(p_y_points=2, rho_points=400, s_points=400, refinement_rounds=3)
        if mode == "exact":
            return cls(p_y_points=9, conditional_points=9, rho_points=21, s_points=21)
        return cls()


@dataclass(frozen=True)
class XiProblem:
    family: ChannelFamily
    rate: float
    delta: DeltaStarSpec = field(default_factory=DeltaStarSpec.uniform)
    mode: str = "lb"
    grids: XiGrids | None = None
    denom_floor: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.rate >= 0:
            raise ValueError("rate must be non-negative")
        if self.grids is None:
            object.__setattr__(self, "grids", XiGrids.for_mode(self.mode))
        if self.mode == "bsc-closed":
            if not self.family.is_bsc:
                raise ValueError("bsc-closed mode requires a BSC family")
            if self.delta.kind not in ("uniform", "linear"):
                raise ValueError("bsc-closed mode requires the uniform i.i.d. ensemble")
        if self.mode == "exact" and max(self.family.x_size, self.family.y_size) > MAX_EXACT_ALPHABET:
            raise ValueError(f"exact mode limited to alphabets of size <= {MAX_EXACT_ALPHABET}")

    def to_dict(self) -> dict:
        return {
            "family": self.family.to_dict(),
            "rate": self.rate,
            "delta": self.delta.to_dict(),
            "mode": self.mode,
            "grids": vars(self.grids).copy(),
            "denom_floor": self.denom_floor,
        }


@dataclass
class XiResult:
    xi: float
    witness: dict
    diagnostics: dict
    problem: XiProblem

    def to_dict(self) -> dict:
        return {
            "schema": "xi-result/1",
            "version": __version__,
            "xi": self.xi,
            "witness": _jsonable(self.witness),
            "diagnostics": _jsonable(self.diagnostics),
            "problem": self.problem.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --------------------------------------------------------------------------
# shared context


class _Context:
    """Effective family, ML exponents and vectorized ``min A`` tables."""

    def __init__(self, problem: XiProblem):
        self.problem = problem
        fam = problem.family
        q = problem.delta.coding_pmf(fam.x_size)
        exps = dmc_exponent_table(fam.channels, q, problem.rate)
        keep = exps >= problem.denom_floor
        self.skipped = [fam.labels[i] for i in range(len(fam)) if not keep[i]]
        if not keep.any():
            raise EmptyFamilyError(
                f"no channel in the family has an ML exponent >= {problem.denom_floor} "
                f"at rate {problem.rate}")
        self.index = np.flatnonzero(keep)
        self.channels = [fam.channels[i] for i in self.index]
        self.labels = [fam.labels[i] for i in self.index]
        self.thetas = None if fam.thetas is None else [fam.thetas[i] for i in self.index]
        self.E = exps[keep]
        self.T = len(self.index)
        self.log_w = np.stack([c.log_w() for c in self.channels])
        self.delta = problem.delta
        if self.delta.is_iid:
            with np.errstate(divide="ignore"):
                self.log_q = np.log(self.delta.reference(fam.x_size).probs)
        self._cache: dict = {}
        self.tables: dict = {}

    def min_A(self, t_idx, alpha, p_y: np.ndarray) -> np.ndarray:
        """``min_{P_X|Y} A(theta_t, alpha, .)`` broadcast over ``t_idx`` and ``alpha``."""
        t_idx, alpha = np.broadcast_arrays(np.asarray(t_idx), np.asarray(alpha, dtype=float))
        if self.delta.is_iid:
            terms = scaled_log_w(self.log_w[t_idx], alpha[..., None, None]) \
                + self.log_q[:, None]
            g = -logsumexp(terms, axis=-2)
            pos = p_y > 0
            return np.einsum("...b,b->...", g[..., pos], p_y[pos])
        py = Pmf(p_y)
        key0 = p_y.tobytes()
        flat_t, flat_a = t_idx.ravel(), alpha.ravel()
        for t in np.unique(flat_t):
            need = sorted({float(a) for a in flat_a[flat_t == t]} - self._cache.get((key0, int(t)), {}).keys())
            if need:
                vals = min_A_general_batch(self.channels[t], np.array(need), py, self.delta)
                self._cache.setdefault((key0, int(t)), {}).update(zip(need, vals.tolist()))
        out = np.array([self._cache[(key0, int(t))][float(a)] for t, a in zip(flat_t, flat_a)])
        return out.reshape(t_idx.shape)

    def theta_record(self, t: int) -> dict:
        rec = {"index": int(self.index[t]), "label": self.labels[t]}
        if self.thetas is not None:
            rec["theta"] = self.thetas[t]
        return rec


# --------------------------------------------------------------------------
# grid-and-refine engine over (theta, theta') pairs and (rho, m)


class _PairObjective:
    """Ratio ``[first(t, m) + second(t', rho, m) - H - rho R] / den(t, t', m)``."""

    def __init__(self, ctx: _Context, const: float, rate: float, floor: float):
        self.ctx = ctx
        self.const = const
        self.rate = rate
        self.floor = floor

    # subclasses define first(), second(), weight() and valid()

    def den(self, ti, tj, m):
        wgt = self.weight(m)
        with np.errstate(invalid="ignore"):
            return (1.0 - wgt) * self.ctx.E[ti] + wgt * self.ctx.E[tj]

    def combine(self, first, second, den, rho, valid):
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            num = first + second - self.const - rho * self.rate
            ratio = num / den
        ok = valid & (den >= self.floor) & ~np.isnan(ratio)
        return np.where(ok, ratio, -np.inf)


class _MuObjective(_PairObjective):
    """``m = s rho`` in ``[0, 1]``; covers the lower bound and branch one."""

    def __init__(self, ctx, const, rate, floor, first_fn):
        super().__init__(ctx, const, rate, floor)
        self.first_fn = first_fn

    def weight(self, m):
        return m

    def valid(self, rho, m):
        return (rho > 0) | (m == 0)

    def first(self, ti, m):
        return self.first_fn(ti, 1.0 - m)

    def second(self, tj, rho, m):
        safe = np.where(rho > 0, rho, 1.0)
        val = rho * self.ctx_min_A(tj, m / safe)
        return np.where(rho > 0, val, 0.0)

    def ctx_min_A(self, tj, alpha):
        return self.ctx.min_A(tj, alpha, self.p_y)


class _VObjective(_PairObjective):
    """``m = 1/(s rho)`` in ``(0, 1]``; the ``s >= 1/rho`` branch."""

    def __init__(self, ctx, const, rate, floor, first_fn):
        super().__init__(ctx, const, rate, floor)
        self.first_fn = first_fn

    def weight(self, m):
        with np.errstate(divide="ignore"):
            return 1.0 / m

    def valid(self, rho, m):
        return (rho > 0) & (m > 0)

    def first(self, ti, m):
        with np.errstate(divide="ignore"):
            return self.first_fn(ti, 1.0 - 1.0 / m)

    def second(self, tj, rho, m):
        safe = np.where((rho > 0) & (m > 0), rho * m, 1.0)
        return rho * self.ctx.min_A(tj, 1.0 / safe, self.p_y)


def _local_axis(center: np.ndarray, step: float) -> np.ndarray:
    offsets = np.arange(-5, 6) * (step / 5.0)
    return np.clip(center[..., None] + offsets, 0.0, 1.0)


def _pair_grid_max(obj: _PairObjective, rho_points: int, m_points: int, rounds: int):
    """Maximize ``obj`` over ``(rho, m)`` separately for every ``(t, t')`` pair.

    Both axes are gridded uniformly in ``u = sqrt(.)`` so that the small
    weights needed by near-capacity channels are resolved. Returns value,
    rho and m arrays of shape ``(T, T)``; ties keep the smallest grid index.
    """
    T = obj.ctx.T
    u_r = np.linspace(0.0, 1.0, rho_points)
    u_m = np.linspace(0.0, 1.0, m_points)
    rho, m = u_r ** 2, u_m ** 2
    tj = np.arange(T)
    # coarse tables: first term per (t, m); second per (t', rho, m)
    first = obj.first(np.arange(T)[:, None], m[None, :])
    # the second table depends on P_Y only; exact mode revisits each P_Y many times
    key = (type(obj).__name__, obj.p_y.tobytes(), rho_points, m_points)
    second = obj.ctx.tables.get(key)
    if second is None:
        second = obj.second(tj[:, None, None], rho[None, :, None], m[None, None, :])
        obj.ctx.tables[key] = second
    valid = obj.valid(rho[:, None], m[None, :])
    best_val = np.empty((T, T))
    best_ur = np.empty((T, T))
    best_um = np.empty((T, T))
    for ti in range(T):
        den = obj.den(ti, tj[:, None], m[None, :])[:, None, :]
        ratio = obj.combine(first[ti][None, None, :], second, den,
                            rho[None, :, None], valid[None])
        flat = ratio.reshape(T, -1)
        arg = np.argmax(flat, axis=1)
        best_val[ti] = flat[np.arange(T), arg]
        best_ur[ti] = u_r[arg // m_points]
        best_um[ti] = u_m[arg % m_points]
    step_r = 1.0 / (rho_points - 1)
    step_m = 1.0 / (m_points - 1)
    ti_b = np.arange(T)[:, None, None, None]
    tj_b = np.arange(T)[None, :, None, None]
    shape = (T, T, 11, 11)
    for _ in range(rounds):
        ur_loc = np.broadcast_to(_local_axis(best_ur, step_r)[..., :, None], shape)
        um_loc = np.broadcast_to(_local_axis(best_um, step_m)[..., None, :], shape)
        r_loc, m_loc = ur_loc ** 2, um_loc ** 2
        ratio = obj.combine(obj.first(ti_b, m_loc), obj.second(tj_b, r_loc, m_loc),
                            obj.den(ti_b, tj_b, m_loc), r_loc, obj.valid(r_loc, m_loc))
        ratio = ratio.reshape(T, T, -1)
        arg = np.argmax(ratio, axis=-1)[..., None]
        val = np.take_along_axis(ratio, arg, axis=-1)[..., 0]
        better = val > best_val
        best_val = np.where(better, val, best_val)
        for cur, loc in ((best_ur, ur_loc), (best_um, um_loc)):
            pick = np.take_along_axis(loc.reshape(T, T, -1), arg, axis=-1)[..., 0]
            cur[...] = np.where(better, pick, cur)
        step_r /= 5.0
        step_m /= 5.0
    return best_val, best_ur ** 2, best_um ** 2


def _simplex_neighbours(center: np.ndarray, step: float) -> np.ndarray:
    """Local lattice around ``center`` at ``step/5`` spacing, kept inside the simplex."""
    dim = center.shape[0]
    if dim == 1:
        return center[None, :]
    offs = np.arange(-5, 6) * (step / 5.0) if dim == 2 else np.arange(-2, 3) * (step / 5.0)
    grids = np.meshgrid(*([offs] * (dim - 1)), indexing="ij")
    delta = np.stack([g.ravel() for g in grids], axis=1)
    pts = center[None, :-1] + delta
    last = 1.0 - pts.sum(axis=1, keepdims=True)
    pts = np.concatenate([pts, last], axis=1)
    ok = np.all(pts >= -1e-15, axis=1)
    pts = np.clip(pts[ok], 0.0, None)
    return pts / pts.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# lower bound


def _lb_value_at(ctx: _Context, p_y: np.ndarray, grids: XiGrids, first_fn=None):
    H = entropy(Pmf(p_y))
    first_fn = first_fn or (lambda t, a: ctx.min_A(t, a, p_y))
    obj = _MuObjective(ctx, H, ctx.problem.rate, ctx.problem.denom_floor, first_fn)
    obj.p_y = p_y
    val, r, m = _pair_grid_max(obj, grids.rho_points, grids.s_points, grids.refinement_rounds)
    flat = int(np.argmin(val))
    ti, tj = divmod(flat, ctx.T)
    return float(val[ti, tj]), ti, tj, float(r[ti, tj]), float(m[ti, tj])


def _outer_p_y_search(ctx: _Context, grids: XiGrids, evaluate):
    y_size = ctx.problem.family.y_size
    candidates = simplex_grid(y_size, grids.p_y_points)
    best = None
    evaluated = 0
    step = 1.0 / (grids.p_y_points - 1)
    for round_ in range(grids.refinement_rounds + 1):
        for p in candidates:
            res = evaluate(p)
            evaluated += 1
            if best is None or res[0] < best[0][0]:
                best = (res, p)
        if y_size == 1:
            break
        candidates = _simplex_neighbours(best[1], step)
        step /= 5.0
    return best[0], best[1], evaluated


def _lb_witness(ctx: _Context, p_y, ti, tj, rho, mu) -> dict:
    lam = 0.0 if rho == 0 else mu / rho
    wit = {
        "theta": ctx.theta_record(ti),
        "theta_prime": ctx.theta_record(tj),
        "p_y": list(map(float, p_y)),
        "rho": rho,
        "lambda": lam,
        "branch": "lb",
    }
    if ctx.delta.is_iid:
        wit["conditional"] = gibbs_minimizer(ctx.channels[ti], 1.0 - lam * rho, ctx.delta)
        wit["conditional_prime"] = gibbs_minimizer(ctx.channels[tj], lam, ctx.delta)
    return wit


def xi_lower_bound(problem: XiProblem) -> XiResult:
    """Grid-and-refine evaluation of the lower-bound expression."""
    if problem.mode != "lb":
        raise ValueError("xi_lower_bound needs mode 'lb'")
    ctx = _Context(problem)
    grids = problem.grids
    (val, ti, tj, rho, mu), p_y, n_eval = _outer_p_y_search(
        ctx, grids, lambda p: _lb_value_at(ctx, p, grids))
    witness = _lb_witness(ctx, p_y, ti, tj, rho, mu)
    diagnostics = {"skipped": ctx.skipped, "effective_size": ctx.T,
                   "p_y_evaluations": n_eval, "grids": vars(grids).copy()}
    return XiResult(val, witness, diagnostics, problem)


def lb_objective(problem: XiProblem, witness: dict) -> float:
    """Recompute the lower-bound ratio at a witness through the scalar functionals."""
    fam = problem.family
    w_t = fam.channels[witness["theta"]["index"]]
    w_tp = fam.channels[witness["theta_prime"]["index"]]
    p_y = Pmf(witness["p_y"])
    rho, lam, R = witness["rho"], witness["lambda"], problem.rate
    E = _exponent_pair(problem, witness)
    den = (1 - lam * rho) * E[0] + lam * rho * E[1]
    if "conditional" in witness:
        num = B_func(w_t, w_tp, p_y, witness["conditional"], witness["conditional_prime"],
                     lam, rho, problem.delta) - rho * R
    else:
        num = (min_A_general(w_t, 1 - lam * rho, p_y, problem.delta)
               + (rho * min_A_general(w_tp, lam, p_y, problem.delta) if rho > 0 else 0.0)
               - entropy(p_y) - rho * R)
    return num / den


def _exponent_pair(problem: XiProblem, witness: dict) -> tuple[float, float]:
    fam = problem.family
    q = problem.delta.coding_pmf(fam.x_size)
    idx = [witness["theta"]["index"], witness["theta_prime"]["index"]]
    vals = dmc_exponent_table([fam.channels[i] for i in idx], q, problem.rate)
    return float(vals[0]), float(vals[1])


# --------------------------------------------------------------------------
# BSC closed form


def xi_lb_bsc_closed_form(family: ChannelFamily, R: float, grids: XiGrids | None = None,
                          denom_floor: float = 1e-6) -> XiResult:
    """Lower bound for a BSC family and the uniform ensemble.

    The output distribution is fixed at uniform and every conditional is
    eliminated through ``V``; only the ``(rho, lambda)`` maximization remains.
    """
    problem = XiProblem(family, R, DeltaStarSpec.uniform(), "bsc-closed", grids, denom_floor)
    ctx = _Context(problem)
    thetas = np.asarray(ctx.thetas)

    def h(t, alpha):
        return LN2 - bsc_V(thetas[np.asarray(t)], alpha)

    val, ti, tj, rho, mu = _lb_value_at(ctx, np.array([0.5, 0.5]), problem.grids, first_fn=h)
    lam = 0.0 if rho == 0 else mu / rho
    witness = {"theta": ctx.theta_record(ti), "theta_prime": ctx.theta_record(tj),
               "rho": rho, "lambda": lam, "branch": "bsc-closed"}
    diagnostics = {"skipped": ctx.skipped, "effective_size": ctx.T,
                   "grids": vars(problem.grids).copy()}
    return XiResult(val, witness, diagnostics, problem)


def bsc_closed_ratio(theta: float, theta_p: float, rho: float, lam: float, R: float,
                     E_theta: float, E_theta_p: float) -> float:
    """The closed-form BSC ratio at one ``(rho, lambda)``."""
    num = rho * LN2 - bsc_V(theta, 1 - lam * rho) - (rho * bsc_V(theta_p, lam) if rho > 0 else 0.0) \
        - rho * R
    return num / ((1 - lam * rho) * E_theta + lam * rho * E_theta_p)


def bsc_closed_objective(problem: XiProblem, witness: dict) -> float:
    th, thp = witness["theta"]["theta"], witness["theta_prime"]["theta"]
    E = _exponent_pair(problem, witness)
    return bsc_closed_ratio(th, thp, witness["rho"], witness["lambda"], problem.rate, *E)


def decomposition_identity(theta: float, theta_p: float, lam: float, rho: float, R: float):
    """Both sides of the split of the closed-form numerator into two ``E_r`` terms.

    ``lhs = rho ln2 - V(theta, 1 - lam rho) - rho V(theta', lam) - rho R`` and
    ``rhs = (1 - lam rho) E_r(theta, rho') + lam rho E_r(theta', rho'')`` with
    ``rho' = lam rho / (1 - lam rho)`` and ``rho'' = 1/lam - 1``.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    if lam * rho >= 1:
        raise ValueError("need lambda * rho < 1")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    lhs = rho * LN2 - bsc_V(theta, 1 - lam * rho) - rho * bsc_V(theta_p, lam) - rho * R
    w = lam * rho
    rho1 = w / (1 - w)
    rho2 = 1 / lam - 1
    rhs = (1 - w) * bsc_Er(theta, rho1, R)
    if w > 0:
        rhs += w * bsc_Er(theta_p, rho2, R)
    return float(lhs), float(rhs)


def optimal_witness(rho_hat: float, rho_tilde: float) -> tuple[float, float]:
    """``(rho, lambda)`` at which the closed-form ratio equals one."""
    lam = 1.0 / (1.0 + rho_tilde)
    rho = rho_hat / (1.0 + rho_hat) * (1.0 + rho_tilde)
    return rho, lam


# --------------------------------------------------------------------------
# exact two-branch expression


def _joint_grid(x_size: int, y_size: int, p_y_points: int, cond_points: int):
    pys = simplex_grid(y_size, p_y_points)
    cols = simplex_grid(x_size, cond_points)
    for p in pys:
        for combo in np.ndindex(*([cols.shape[0]] * y_size)):
            yield p, np.stack([cols[c] for c in combo], axis=1)


def _exact_value_at(ctx: _Context, p_y: np.ndarray, cond: np.ndarray, grids: XiGrids,
                    rounds: int):
    problem = ctx.problem
    joint = cond * p_y[None, :]
    j = JointPmf(joint)
    base = mutual_information(j) + delta_star(problem.delta, j.marginal_x())
    if math.isinf(base):
        return math.inf, None
    pos = joint > 0
    with np.errstate(invalid="ignore"):
        ell = np.where(pos[None], joint[None] * ctx.log_w, 0.0).sum(axis=(1, 2))

    def first_fn(t, alpha):
        t, alpha = np.broadcast_arrays(np.asarray(t), np.asarray(alpha, dtype=float))
        e = ell[t]
        with np.errstate(invalid="ignore"):
            tilt = np.where(alpha == 0, 0.0, -alpha * e)
        return base + tilt

    H = entropy(Pmf(p_y))
    out = []
    for cls in (_MuObjective, _VObjective):
        obj = cls(ctx, H, problem.rate, problem.denom_floor, first_fn)
        obj.p_y = p_y
        out.append(_pair_grid_max(obj, grids.rho_points, grids.s_points, rounds))
    (v1, r1, m1), (v2, r2, m2) = out
    b1_t = np.argmin(v1, axis=0)              # per theta'
    b1 = v1[b1_t, np.arange(ctx.T)]
    b2_t = np.argmax(v2, axis=0)
    b2 = v2[b2_t, np.arange(ctx.T)]
    per_tp = np.maximum(b1, b2)
    tj = int(np.argmin(per_tp))
    if b1[tj] >= b2[tj]:
        ti, branch, rho, m = int(b1_t[tj]), 1, r1[b1_t[tj], tj], m1[b1_t[tj], tj]
        s = 0.0 if rho == 0 else m / rho
    else:
        ti, branch, rho, m = int(b2_t[tj]), 2, r2[b2_t[tj], tj], m2[b2_t[tj], tj]
        s = 1.0 / (m * rho)
    return float(per_tp[tj]), {"ti": ti, "tj": tj, "branch": branch, "rho": float(rho),
                               "s": float(s), "branch_values": [float(b1[tj]), float(b2[tj])]}


def xi_exact(problem: XiProblem, refine_top: int = 4) -> XiResult:
    """Grid-and-refine evaluation of the two-branch expression.

    Joint candidates are scored on the coarse ``(rho, s)`` grid; only the
    ``refine_top`` lowest of each sweep get the full ``(rho, s)`` refinement.
    Each refinement round re-grids the joint locally around the incumbent.
    """
    if problem.mode != "exact":
        raise ValueError("xi_exact needs mode 'exact'")
    ctx = _Context(problem)
    grids = problem.grids
    fam = problem.family
    n_eval = 0
    best = None

    def sweep(candidates):
        nonlocal best, n_eval
        scored = []
        for order, (p_y, cond) in enumerate(candidates):
            val, _ = _exact_value_at(ctx, p_y, cond, grids, rounds=0)
            scored.append((val, order, p_y, cond))
        n_eval += len(scored)
        scored.sort(key=lambda item: (item[0], item[1]))
        for _, _, p_y, cond in scored[:refine_top]:
            val, wit = _exact_value_at(ctx, p_y, cond, grids, grids.refinement_rounds)
            n_eval += 1
            if best is None or val < best[0]:
                best = (val, wit, p_y, cond)

    sweep(list(_joint_grid(fam.x_size, fam.y_size, grids.p_y_points,
                           grids.conditional_points)))
    step_y = 1.0 / (grids.p_y_points - 1)
    step_c = 1.0 / (grids.conditional_points - 1)
    for _ in range(grids.refinement_rounds):
        _, _, p0, c0 = best
        cols = [_simplex_neighbours(c0[:, b], step_c) for b in range(fam.y_size)]
        candidates = []
        for p_y in _simplex_neighbours(p0, step_y):
            for combo in np.ndindex(*[len(c) for c in cols]):
                candidates.append(
                    (p_y, np.stack([cols[b][i] for b, i in enumerate(combo)], axis=1)))
        sweep(candidates)
        step_y /= 5.0
        step_c /= 5.0
    val, wit, p_y, cond = best
    witness = {
        "theta": ctx.theta_record(wit["ti"]),
        "theta_prime": ctx.theta_record(wit["tj"]),
        "p_y": p_y,
        "conditional": cond,
        "rho": wit["rho"],
        "s": wit["s"],
        "branch": wit["branch"],
        "branch_values": wit["branch_values"],
    }
    if problem.delta.is_iid:
        witness["conditional_prime"] = gibbs_minimizer(ctx.channels[wit["tj"]], wit["s"],
                                                       problem.delta)
    diagnostics = {"skipped": ctx.skipped, "effective_size": ctx.T,
                   "joint_evaluations": n_eval, "grids": vars(grids).copy()}
    return XiResult(val, witness, diagnostics, problem)


def exact_objective(problem: XiProblem, witness: dict) -> float:
    """Recompute the exact-mode ratio at the witness (the branch it recorded)."""
    fam = problem.family
    w_t = fam.channels[witness["theta"]["index"]]
    w_tp = fam.channels[witness["theta_prime"]["index"]]
    p_y = Pmf(witness["p_y"])
    rho, s, R = witness["rho"], witness["s"], problem.rate
    E = _exponent_pair(problem, witness)
    den = (1 - rho * s) * E[0] + rho * s * E[1]
    if "conditional_prime" in witness:
        num = B_func(w_t, w_tp, p_y, witness["conditional"], witness["conditional_prime"],
                     s, rho, problem.delta)
    else:
        j = JointPmf.from_conditional(p_y, witness["conditional"])
        from .exponents import A_func
        num = (A_func(w_t, 1 - s * rho, j, problem.delta)
               + (rho * min_A_general(w_tp, s, p_y, problem.delta) if rho > 0 else 0.0)
               - entropy(p_y))
    return (num - rho * R) / den


def replay(result: XiResult) -> float:
    """Objective value recomputed at the stored witness."""
    mode = result.problem.mode
    if mode == "bsc-closed":
        return bsc_closed_objective(result.problem, result.witness)
    if mode == "lb":
        return lb_objective(result.problem, result.witness)
    return exact_objective(result.problem, result.witness)


def solve(problem: XiProblem) -> XiResult:
    """Dispatch on ``problem.mode``."""
    if problem.mode == "bsc-closed":
        return xi_lb_bsc_closed_form(problem.family, problem.rate, problem.grids,
                                     problem.denom_floor)
    if problem.mode == "exact":
        return xi_exact(problem)
    return xi_lower_bound(problem)


def with_rate(problem: XiProblem, rate: float) -> XiProblem:
    return replace(problem, rate=rate)


# --------------------------------------------------------------------------
# method-of-types moment rate


def log_moment_rate(w: Dmc, alpha: float, xi: float, p_y: Pmf, spec: DeltaStarSpec,
                    R: float = 0.0) -> float:
    """Exponential rate of ``E_Q[exp(N alpha f_theta(X, y))]`` for a fixed output type.

    ``alpha xi E_r*(theta) - min_{P_X|Y} A(theta, alpha, .)``; ``R`` enters only
    through ``E_r*``.
    """
    if alpha == 0:
        return 0.0
    E = 0.0
    if xi != 0:
        q = spec.coding_pmf(w.x_size)
        E = float(dmc_exponent_table([w], q, R)[0])
    return alpha * xi * E - min_A_general(w, alpha, p_y, spec)
