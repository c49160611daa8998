"""Built-in LP/MILP engine.

A dense two-phase primal simplex over bounded variables, plus an
LP-relaxation branch-and-bound for models whose integer variables are the
placement binaries. Intended for desk-scale models; large instances should
go through the external adapter instead.

Pivot rules are fixed (Dantzig with index tie-breaks, Bland's rule after a
degeneracy budget of 10*(rows+cols) pivots), so identical models produce
identical results and statistics.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dger

from .linear_model import GE, INF, LE, LinearModel, ModelError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit-reached"

FEAS_TOL = 1e-7
INT_TOL = 1e-6
GAP_ABS = 1e-6

# dense tableau cells above this would exhaust desk-scale memory
_MAX_TABLEAU_CELLS = 6e7


class NumericalInstabilityError(RuntimeError):
    """Simplex failed to converge even under Bland's rule."""


_DEBUG_HOOK = None  # test/debug callback: (simplex, entering, leaving, pivot, step)


@dataclass
class SolveOptions:
    feas_tol: float = FEAS_TOL
    int_tol: float = INT_TOL
    gap_abs: float = GAP_ABS
    gap_rel: float = 0.0
    node_limit: int | None = None
    time_limit: float | None = None

    def prune_cutoff(self, incumbent: float) -> float:
        slack = max(self.gap_abs, self.gap_rel * abs(incumbent))
        return incumbent - slack


@dataclass
class SolveStats:
    iterations: int = 0
    nodes: int = 0
    wall_time: float = 0.0


@dataclass
class SolveResult:
    status: str
    objective: float | None
    x: np.ndarray | None
    dual_values: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    bound: float | None = None
    stats: SolveStats = field(default_factory=SolveStats)

    def value(self, model: LinearModel, name: str) -> float:
        return float(self.x[model.var(name)])


# ---------------------------------------------------------------------------
# computational standard form: min c.z  s.t.  [A|I] z = b,  l <= z <= u
# ---------------------------------------------------------------------------

def _pow2_scale(v: np.ndarray) -> np.ndarray:
    """Nearest power of two to 1/v, exact under binary floats."""
    out = np.ones_like(v)
    good = (v > 0) & np.isfinite(v)
    out[good] = np.exp2(-np.round(np.log2(v[good])))
    return out


class _StandardForm:
    """min c.z s.t. [A|I] z = b, l <= z <= u, with power-of-two equilibration.

    Rows and structural columns are scaled to unit max-norm before slacks
    are appended, so the slack block stays the identity. Bounds passed to
    the simplex are in ORIGINAL units and scaled on entry; solutions and
    duals are reported unscaled.
    """

    def __init__(self, model: LinearModel):
        n, m = model.num_vars, model.num_constraints
        if (m + 1) * (n + 2 * m + 1) > _MAX_TABLEAU_CELLS:
            raise ModelError(
                f"model with {m} rows x {n} columns is too large for the "
                "built-in engine; use the external backend")
        c, A, senses, b, lb, ub = model.dense_arrays()
        self.n = n
        self.m = m
        if m:
            row_scale = _pow2_scale(np.abs(A).max(axis=1))
            A = A * row_scale[:, None]
            b = b * row_scale
            col_scale = _pow2_scale(np.abs(A).max(axis=0))
            A = A * col_scale[None, :]
        else:
            row_scale = np.zeros(0)
            col_scale = np.ones(n)
        self.row_scale = row_scale
        # column scale applies to structural columns only; slacks stay at 1
        self.col_scale = np.concatenate([col_scale, np.ones(m)])
        self.c = np.concatenate([c * col_scale, np.zeros(m)])
        self.c_raw = np.concatenate([c, np.zeros(m)])
        self.A = np.hstack([A, np.eye(m)]) if m else A.reshape((0, n))
        self.b = b
        slack_lb = np.zeros(m)
        slack_ub = np.zeros(m)
        for k, s in enumerate(senses):
            if s == LE:
                slack_lb[k], slack_ub[k] = 0.0, INF
            elif s == GE:
                slack_lb[k], slack_ub[k] = -INF, 0.0
            else:
                slack_lb[k], slack_ub[k] = 0.0, 0.0
        # original-unit bounds; _Simplex scales them on entry
        self.lb = np.concatenate([lb, slack_lb])
        self.ub = np.concatenate([ub, slack_ub])


# ---------------------------------------------------------------------------
# bounded-variable primal simplex on a dense tableau
# ---------------------------------------------------------------------------

_AT_LB, _AT_UB, _BASIC = 0, 1, 2


class _Simplex:
    """One LP solve over the standard form with per-call bounds."""

    def __init__(self, sf: _StandardForm, lb: np.ndarray, ub: np.ndarray,
                 options: SolveOptions):
        self.sf = sf
        self.opt = options
        self.m = sf.m
        self.lb0 = lb
        self.ub0 = ub
        self.iterations = 0

    def solve(self):
        sf, m = self.sf, self.m
        tol = self.opt.feas_tol
        if m == 0:
            return self._solve_unconstrained()

        # work in scaled units throughout
        lb0 = self.lb0 / sf.col_scale
        ub0 = self.ub0 / sf.col_scale
        x = np.where(np.isfinite(lb0), lb0, np.where(np.isfinite(ub0), ub0, 0.0))
        status = np.where(np.isfinite(lb0), _AT_LB,
                          np.where(np.isfinite(ub0), _AT_UB, _AT_LB)).astype(np.int8)

        resid = sf.b - sf.A[:, :sf.n] @ x[:sf.n]
        slack = np.arange(sf.n, sf.n + m)
        need_art = (resid < lb0[slack] - tol) | (resid > ub0[slack] + tol)

        n_art = int(need_art.sum())
        self.N = sf.n + m + n_art
        T = np.zeros((m, self.N))
        T[:, :sf.n + m] = sf.A
        lb = np.concatenate([lb0, np.zeros(n_art)])
        ub = np.concatenate([ub0, np.full(n_art, INF)])
        x = np.concatenate([x, np.zeros(n_art)])
        status = np.concatenate([status, np.full(n_art, _BASIC, dtype=np.int8)])

        basis = slack.copy()
        art_cols = []
        k_art = 0
        for k in range(m):
            sj = slack[k]
            if need_art[k]:
                j = sf.n + m + k_art
                clipped = min(max(resid[k], lb0[sj]), ub0[sj])
                gap = resid[k] - clipped
                T[k, j] = 1.0 if gap >= 0 else -1.0
                x[sj] = clipped
                status[sj] = _AT_LB if clipped == lb0[sj] else _AT_UB
                x[j] = abs(gap)
                basis[k] = j
                art_cols.append(j)
                k_art += 1
                if gap < 0:
                    T[k, :] *= -1.0  # make the basic artificial's column +e_k
            else:
                x[sj] = resid[k]
                status[sj] = _BASIC

        self.T = T
        self.A_ext = T.copy()  # pristine scaled matrix for refactorization
        self.basis = basis
        self.x = x
        self.lbx = lb
        self.ubx = ub
        self.status = status

        if art_cols:
            c1 = np.zeros(self.N)
            c1[art_cols] = 1.0
            st = self._iterate(c1, phase1=True)
            if st != OPTIMAL:
                raise NumericalInstabilityError("phase 1 did not converge")
            if x[art_cols].sum() > 1e-6:
                return INFEASIBLE, None, None
            self._evict_artificials(art_cols)
            lb[art_cols] = 0.0
            ub[art_cols] = 0.0
            x[art_cols] = 0.0

        c2 = np.concatenate([sf.c, np.zeros(n_art)])
        st = self._iterate(c2)
        if st == UNBOUNDED:
            return UNBOUNDED, None, None
        self._refresh_basics()
        pi = c2[basis] @ self._binv()
        red = c2[:sf.n + m] - pi @ sf.A
        # unscale back to original units
        z = self.x[:sf.n + m] * sf.col_scale
        pi_orig = pi * sf.row_scale
        red_orig = red[:sf.n] / sf.col_scale[:sf.n]
        return OPTIMAL, z, (pi_orig, red_orig)

    def _binv(self) -> np.ndarray:
        # slack block of A is the identity, so those tableau columns are B^-1
        return self.T[:, self.sf.n:self.sf.n + self.m]

    def _refresh_basics(self) -> None:
        x_nb = self.x.copy()
        x_nb[self.basis] = 0.0
        self.x[self.basis] = self._binv() @ self.sf.b - self.T @ x_nb

    def _refactorize(self) -> None:
        """Rebuild the tableau from the pristine matrix (drift recovery)."""
        B = self.A_ext[:, self.basis]
        self.T = np.linalg.solve(B, self.A_ext)
        x_nb = self.x.copy()
        x_nb[self.basis] = 0.0
        rhs = self.sf.b - self.A_ext @ x_nb
        self.x[self.basis] = np.linalg.solve(B, rhs)

    # -- core loop ----------------------------------------------------------

    def _iterate(self, c: np.ndarray, phase1: bool = False) -> str:
        basis = self.basis
        x, lb, ub, status = self.x, self.lbx, self.ubx, self.status
        m, N = self.m, self.N
        dual_tol = 1e-9
        piv_tol = 1e-10
        harris_eps = 1e-9

        T = self.T
        d = c - c[basis] @ T
        d[basis] = 0.0
        d_verified = True
        just_refactorized = False
        gamma = np.ones(N)  # devex reference weights
        bland = False
        degen_run = 0
        degen_budget = 10 * (m + N)
        max_iter = 50 * (m + N) + 20000

        fixed = lb == ub
        free = ~np.isfinite(lb) & ~np.isfinite(ub)
        it0 = self.iterations
        while True:
            if self.iterations - it0 > max_iter:
                raise NumericalInstabilityError(
                    f"simplex exceeded {max_iter} iterations")

            up = (~fixed) & (status == _AT_LB) & (d < -dual_tol)
            dn = (d > dual_tol) & (~fixed) & (
                (status == _AT_UB) | ((status == _AT_LB) & free))
            elig = np.flatnonzero(up | dn)
            if elig.size == 0:
                if d_verified:
                    return OPTIMAL
                # recompute reduced costs exactly before accepting optimality
                d = c - c[basis] @ T
                d[basis] = 0.0
                d_verified = True
                continue
            if bland:
                q = int(elig[0])
            else:
                de = d[elig]
                q = int(elig[np.argmax(de * de / gamma[elig])])
            direction = 1.0 if up[q] else -1.0

            w = T[:, q] * direction
            xb = x[basis]
            lbb = lb[basis]
            ubb = ub[basis]
            t_bound = ub[q] - lb[q]  # inf unless both bounds finite

            # Harris two-pass ratio test: find the relaxed step allowed by a
            # small feasibility slack, then pivot on the largest |w| blocker
            # within it (curbs tiny-pivot blowups).
            pos = w > piv_tol
            neg = w < -piv_tol
            ratios = np.full(m, INF)
            relaxed = np.full(m, INF)
            with np.errstate(invalid="ignore"):
                np.divide(xb - lbb, w, out=ratios, where=pos)
                np.divide(xb - lbb + harris_eps, w, out=relaxed, where=pos)
                wneg = np.where(neg, w, 1.0)
                ratios = np.where(neg, (xb - ubb) / wneg, ratios)
                relaxed = np.where(neg, (xb - ubb - harris_eps) / wneg, relaxed)
            ratios = np.where(np.isnan(ratios), INF, ratios)
            relaxed = np.where(np.isnan(relaxed), INF, relaxed)
            np.maximum(ratios, 0.0, out=ratios)
            tmax = relaxed.min() if m else INF
            leave = -1
            if np.isfinite(tmax):
                cand = np.flatnonzero(ratios <= tmax)
                if cand.size:
                    leave = int(cand[np.argmax(np.abs(w[cand]))])
            if leave >= 0 and ratios[leave] < t_bound:
                t_best = ratios[leave]
            else:
                leave = -1
                t_best = t_bound
            if not np.isfinite(t_best):
                # guard against stale reduced costs / tableau drift
                dq_exact = c[q] - c[basis] @ T[:, q]
                if abs(dq_exact) <= 100.0 * dual_tol:
                    d[q] = 0.0
                    continue
                if not just_refactorized:
                    self._refactorize()
                    T = self.T
                    d = c - c[basis] @ T
                    d[basis] = 0.0
                    d_verified = True
                    just_refactorized = True
                    continue
                if phase1:
                    # the phase-1 objective is bounded below; this column
                    # cannot truly improve it
                    d[q] = 0.0
                    continue
                return UNBOUNDED

            self.iterations += 1
            if t_best <= 1e-11:
                degen_run += 1
                if degen_run > degen_budget and not bland:
                    bland = True
            else:
                degen_run = 0

            x[q] += t_best * direction
            x[basis] = xb - t_best * w
            if leave < 0:
                status[q] = _AT_UB if direction > 0 else _AT_LB
                continue

            lv = basis[leave]
            hit_lb = w[leave] > 0
            x[lv] = lb[lv] if hit_lb else ub[lv]
            status[lv] = _AT_LB if hit_lb else _AT_UB
            status[q] = _BASIC
            basis[leave] = q

            piv = T[leave, q]
            if _DEBUG_HOOK is not None:
                _DEBUG_HOOK(self, q, leave, piv, t_best)
            row = T[leave, :] / piv
            col = T[:, q].copy()
            col[leave] = 0.0
            dger(-1.0, row, col, a=T.T, overwrite_a=1)  # T -= outer(col, row)
            T[leave, :] = row
            dq = d[q]
            if dq != 0.0:
                d -= dq * row
            d[basis] = 0.0
            d_verified = False
            just_refactorized = False
            # devex weight update against the pivot row
            gq = max(gamma[q], 1.0)
            np.maximum(gamma, row * row * gq, out=gamma)
            gamma[q] = max(gq / (piv * piv), 1.0)

            if self.iterations % 512 == 0:
                d = c - c[basis] @ T
                d[basis] = 0.0
                d_verified = True
                self._refresh_basics()

    def _evict_artificials(self, art_cols) -> None:
        art = set(art_cols)
        ncols = self.sf.n + self.m
        for k in range(self.m):
            j = self.basis[k]
            if j not in art:
                continue
            row = self.T[k, :ncols]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            cand = [int(q) for q in cand
                    if self.status[q] != _BASIC and self.lbx[q] != self.ubx[q]]
            if not cand:
                continue  # redundant row; artificial stays basic at zero
            q = cand[0]
            piv = self.T[k, q]
            rw = self.T[k, :] / piv
            col = self.T[:, q].copy()
            col[k] = 0.0
            self.T -= np.outer(col, rw)
            self.T[k, :] = rw
            self.status[j] = _AT_LB
            self.x[j] = 0.0
            self.status[q] = _BASIC
            self.basis[k] = q
            self.iterations += 1

    def _solve_unconstrained(self):
        sf = self.sf
        x = np.empty(sf.n)
        for j in range(sf.n):
            cj = sf.c[j]
            lo, hi = self.lb0[j], self.ub0[j]
            if cj > 0:
                tgt = lo
            elif cj < 0:
                tgt = hi
            else:
                tgt = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
            if not np.isfinite(tgt):
                return UNBOUNDED, None, None
            x[j] = tgt
        return OPTIMAL, x, (np.zeros(0), sf.c[:sf.n].copy())


def _solve_lp_arrays(sf: _StandardForm, lb: np.ndarray, ub: np.ndarray,
                     options: SolveOptions):
    sx = _Simplex(sf, lb, ub, options)
    status, z, duals = sx.solve()
    return status, z, duals, sx.iterations


def solve_lp(model: LinearModel, options: SolveOptions | None = None,
             relax: bool = False) -> SolveResult:
    """Solve the model as a pure LP with the built-in simplex.

    Integer flags must be absent unless relax=True requests the relaxation.
    Returns primal values, row duals and reduced costs on optimal status.
    """
    if model.integer_indices and not relax:
        raise ModelError("model has integer variables; pass relax=True or "
                         "use solve_milp")
    options = options or SolveOptions()
    t0 = time.perf_counter()
    sf = _StandardForm(model)
    status, z, duals, iters = _solve_lp_arrays(sf, sf.lb, sf.ub, options)
    stats = SolveStats(iterations=iters, wall_time=time.perf_counter() - t0)
    if status != OPTIMAL:
        return SolveResult(status, None, None, stats=stats)
    x = z[:sf.n]
    pi, red = duals
    obj = float(sf.c_raw[:sf.n] @ x) + model.objective_const
    return SolveResult(OPTIMAL, obj, x, dual_values=pi, reduced_costs=red,
                       bound=obj, stats=stats)


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------

def solve_milp(model: LinearModel, options: SolveOptions | None = None) -> SolveResult:
    """Exact MILP solve via LP-relaxation branch-and-bound.

    Best-bound node selection, most-fractional branching, optimality proven
    by bound closure within the absolute gap `options.gap_abs`.
    """
    options = options or SolveOptions()
    t0 = time.perf_counter()
    sf = _StandardForm(model)
    int_idx = np.array(model.integer_indices, dtype=int)
    stats = SolveStats()

    if int_idx.size == 0:
        res = solve_lp(model, options)
        res.stats.nodes = 1
        return res

    best_x = None
    best_val = INF
    counter = 0
    heap: list = []

    def eval_node(lb, ub):
        status, z, _, iters = _solve_lp_arrays(sf, lb, ub, options)
        stats.iterations += iters
        stats.nodes += 1
        if status != OPTIMAL:
            return None
        val = float(sf.c_raw @ z) + model.objective_const
        return val, z[:sf.n]

    root = eval_node(sf.lb, sf.ub)
    limit_hit = False
    if root is not None:
        heapq.heappush(heap, (root[0], counter, sf.lb.copy(), sf.ub.copy(), root[1]))
        counter += 1

    while heap:
        if options.node_limit is not None and stats.nodes >= options.node_limit:
            limit_hit = True
            break
        if options.time_limit is not None and time.perf_counter() - t0 > options.time_limit:
            limit_hit = True
            break
        bound, _, lb, ub, x = heapq.heappop(heap)
        if bound >= options.prune_cutoff(best_val):
            heap.clear()
            break
        frac = np.abs(x[int_idx] - np.round(x[int_idx]))
        if frac.max() <= options.int_tol:
            if bound < best_val:
                best_val, best_x = bound, x
            continue
        j = int(int_idx[np.argmax(np.minimum(frac, 1.0 - frac))])
        xf = x[j]
        for lo_add, hi_add in ((None, np.floor(xf)), (np.ceil(xf), None)):
            clb, cub = lb.copy(), ub.copy()
            if hi_add is not None:
                cub[j] = min(cub[j], hi_add)
            if lo_add is not None:
                clb[j] = max(clb[j], lo_add)
            if clb[j] > cub[j]:
                continue
            child = eval_node(clb, cub)
            if child is None:
                continue
            val, cx = child
            if val >= options.prune_cutoff(best_val):
                continue
            cf = np.abs(cx[int_idx] - np.round(cx[int_idx]))
            if cf.max() <= options.int_tol:
                if val < best_val:
                    best_val, best_x = val, cx
            else:
                heapq.heappush(heap, (val, counter, clb, cub, cx))
                counter += 1

    stats.wall_time = time.perf_counter() - t0
    open_bound = min((h[0] for h in heap), default=best_val)
    if limit_hit:
        obj = best_val if best_x is not None else None
        return SolveResult(LIMIT, obj, best_x,
                           bound=min(open_bound, best_val), stats=stats)
    if best_x is None:
        return SolveResult(INFEASIBLE, None, None, stats=stats)
    x = best_x.copy()
    x[int_idx] = np.round(x[int_idx])
    return SolveResult(OPTIMAL, best_val, x, bound=best_val, stats=stats)
