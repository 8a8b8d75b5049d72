"""Dense bounded-variable dual simplex.

Solves  min c'x  s.t.  A x {<=,=,>=} b,  lo <= x <= up  with finite bounds on
every structural variable. Each row gets one slack, so with the all-slack basis
the reduced costs equal the objective row; picking each nonbasic variable's
bound from its cost sign makes that basis dual-feasible for free, and a single
dual-simplex loop then serves cold starts, bound-change warm starts (the
branch-and-bound workhorse), and row additions.

Bound edits never touch reduced costs, so any basis reached while solving one
node stays dual-feasible for the next; branch-and-bound can walk the tree on a
single tableau without copying or replaying pivots.

The tableau is dense in one numpy array; a pivot is one rank-1 update. Basic
columns stay exactly unit under this update, which keeps the incremental row
elimination in add_rows exact. Anti-cycling: after a run of degenerate pivots
the selection rules switch to lowest-index (Bland) order.
"""

from __future__ import annotations

import numpy as np

PTOL = 1e-7  # primal feasibility
DTOL = 1e-9  # dual feasibility / degeneracy
PIVTOL = 1e-7  # smallest acceptable pivot element

AT_LO, AT_UP, BASIC = 0, 1, 2

OPTIMAL = "OPTIMAL"
INFEASIBLE = "INFEASIBLE"

_BLAND_AFTER = 4000  # consecutive degenerate pivots before switching rules


class SimplexError(RuntimeError):
    pass


class DenseLp:
    """One LP instance with an incrementally re-optimizable basis."""

    def __init__(
        self,
        c: np.ndarray,
        A: np.ndarray | None = None,
        senses: list[str] | None = None,
        rhs: np.ndarray | None = None,
        lo: np.ndarray | None = None,
        up: np.ndarray | None = None,
        max_iter: int = 200_000,
    ):
        c = np.asarray(c, dtype=float)
        n = len(c)
        lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=float).copy()
        up = np.full(n, np.inf) if up is None else np.asarray(up, dtype=float).copy()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValueError("structural variables need finite bounds")
        if np.any(lo > up + 1e-12):
            raise ValueError("lower bound exceeds upper bound")
        self.n = n
        self.m = 0
        self.max_iter = max_iter
        self.c = c.copy()
        self.lo = lo
        self.up = up
        # columns: [structurals | slacks]; rows only via add_rows
        self.T = np.zeros((0, n))
        self.basis = np.zeros(0, dtype=int)
        self.xB = np.zeros(0)
        self.stat = np.where(c >= 0, AT_LO, AT_UP).astype(np.int8)
        self.z = c.copy()
        self.pivots = 0
        self._A_orig = np.zeros((0, n))  # [A | I] rows, for refresh
        self._rhs = np.zeros(0)
        if rhs is not None and len(rhs):
            A = np.asarray(A, dtype=float).reshape(len(rhs), n)
            self.add_rows(A, list(senses), np.asarray(rhs, dtype=float))

    # -- current point --------------------------------------------------------

    def nonbasic_values(self) -> np.ndarray:
        v = np.where(self.stat == AT_UP, self.up, self.lo)
        v[self.stat == BASIC] = 0.0
        return v

    def x_full(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.xB
        return x

    def x(self) -> np.ndarray:
        return self.x_full()[: self.n]

    def objective(self) -> float:
        return float(self.c @ self.x_full())

    # -- structure edits (all preserve dual feasibility) -----------------------

    def add_rows(self, A_new: np.ndarray, senses: list[str], rhs: np.ndarray) -> None:
        """Append rows over structural variables; their slacks enter the basis."""
        k = len(rhs)
        if k == 0:
            return
        A_new = np.asarray(A_new, dtype=float).reshape(k, self.n)
        rhs = np.asarray(rhs, dtype=float)
        slack_lo = np.empty(k)
        slack_up = np.empty(k)
        for i, s in enumerate(senses):
            if s == "<=":
                slack_lo[i], slack_up[i] = 0.0, np.inf
            elif s == ">=":
                slack_lo[i], slack_up[i] = -np.inf, 0.0
            elif s == "==":
                slack_lo[i], slack_up[i] = 0.0, 0.0
            else:
                raise ValueError(f"unknown sense {s!r}")
        x_struct = self.x_full()[: self.n]
        ncols_old = self.n + self.m
        self.T = np.hstack([self.T, np.zeros((self.m, k))])
        rows = np.hstack([A_new, np.zeros((k, self.m)), np.eye(k)])
        # eliminate basic columns so the new rows live in the current basis;
        # T rows are exactly unit on other basis columns, so one pass suffices
        for i, col in enumerate(self.basis):
            coef = rows[:, col].copy()
            hit = np.abs(coef) > 0
            if np.any(hit):
                rows[hit] -= np.outer(coef[hit], self.T[i])
        self.T = np.vstack([self.T, rows])
        self.lo = np.concatenate([self.lo, slack_lo])
        self.up = np.concatenate([self.up, slack_up])
        self.c = np.concatenate([self.c, np.zeros(k)])
        self.z = np.concatenate([self.z, np.zeros(k)])
        self.stat = np.concatenate([self.stat, np.full(k, BASIC, dtype=np.int8)])
        self.basis = np.concatenate([self.basis, np.arange(ncols_old, ncols_old + k)])
        self.xB = np.concatenate([self.xB, rhs - A_new @ x_struct])
        self._A_orig = np.hstack([self._A_orig, np.zeros((self.m, k))])
        self._A_orig = np.vstack(
            [self._A_orig, np.hstack([A_new, np.zeros((k, self.m)), np.eye(k)])]
        )
        self._rhs = np.concatenate([self._rhs, rhs])
        self.m += k

    def set_bounds(self, j: int, lo: float, up: float) -> None:
        """Move one structural variable's bounds; fix basic values to match."""
        if j >= self.n:
            raise ValueError("can only re-bound structural variables")
        old_val = None
        if self.stat[j] != BASIC:
            old_val = self.lo[j] if self.stat[j] == AT_LO else self.up[j]
        self.lo[j] = lo
        self.up[j] = up
        if self.stat[j] != BASIC:
            new_val = lo if self.stat[j] == AT_LO else up
            delta = new_val - old_val
            if delta != 0.0:
                self.xB -= self.T[:, j] * delta

    # -- dual simplex ----------------------------------------------------------

    def solve(self) -> str:
        """Re-optimize from the current basis. Returns OPTIMAL or INFEASIBLE."""
        stall = 0
        iters = 0
        refreshed = False
        while True:
            iters += 1
            if iters > self.max_iter:
                raise SimplexError("iteration limit exceeded")
            viol_lo = self.lo[self.basis] - self.xB
            viol_up = self.xB - self.up[self.basis]
            viol = np.maximum(viol_lo, viol_up)
            worst = float(viol.max(initial=0.0))
            if worst <= PTOL:
                # primal feasibility alone is not optimality: bound flips and
                # row additions can leave wrong-signed reduced costs behind
                if self._primal_cleanup():
                    continue
                return OPTIMAL
            if stall <= _BLAND_AFTER:
                r = int(np.argmax(viol))
            else:
                r = int(np.nonzero(viol > PTOL)[0][0])
            below = viol_lo[r] >= viol_up[r]
            alpha = self.T[r]
            if below:
                elig = ((self.stat == AT_LO) & (alpha < -PIVTOL)) | (
                    (self.stat == AT_UP) & (alpha > PIVTOL)
                )
            else:
                elig = ((self.stat == AT_LO) & (alpha > PIVTOL)) | (
                    (self.stat == AT_UP) & (alpha < -PIVTOL)
                )
            elig &= self.lo[: self.n + self.m] < self.up[: self.n + self.m] - 1e-15
            cand = np.nonzero(elig)[0]
            if len(cand) == 0:
                if not refreshed:
                    # rule out a numerically stale tableau before declaring
                    self.refresh()
                    refreshed = True
                    continue
                return INFEASIBLE
            ratios = np.abs(self.z[cand]) / np.abs(alpha[cand])
            best = ratios.min()
            tied = cand[ratios <= best + DTOL]
            if stall <= _BLAND_AFTER:
                e = int(tied[np.argmax(np.abs(alpha[tied]))])
            else:
                e = int(tied[0])
            if abs(self.z[e]) <= DTOL:
                stall += 1
            else:
                stall = 0
            self._pivot(r, e, below)

    def _primal_cleanup(self) -> bool:
        """Primal-simplex pass from a primal-feasible point.

        Enters variables whose reduced cost disagrees with their bound until
        dual feasibility holds. Returns True if anything moved (the caller
        re-checks primal feasibility), False when already optimal.
        """
        moved = False
        stall = 0
        iters = 0
        while True:
            iters += 1
            if iters > self.max_iter:
                raise SimplexError("iteration limit exceeded")
            movable = self.lo < self.up - 1e-15
            bad = movable & (
                ((self.stat == AT_LO) & (self.z < -DTOL))
                | ((self.stat == AT_UP) & (self.z > DTOL))
            )
            cand = np.nonzero(bad)[0]
            if len(cand) == 0:
                return moved
            if stall <= _BLAND_AFTER:
                e = int(cand[np.argmax(np.abs(self.z[cand]))])
            else:
                e = int(cand[0])
            sigma = 1.0 if self.stat[e] == AT_LO else -1.0
            step = self.up[e] - self.lo[e]  # own-bound flip distance
            alpha = self.T[:, e] * sigma
            bvals = self.xB
            blo = self.lo[self.basis]
            bup = self.up[self.basis]
            r = -1
            below = False
            with np.errstate(divide="ignore", invalid="ignore"):
                down = np.where(alpha > PIVTOL, (bvals - blo) / alpha, np.inf)
                upw = np.where(alpha < -PIVTOL, (bvals - bup) / alpha, np.inf)
            for ratios, hit_lo in ((down, True), (upw, False)):
                k = int(np.argmin(ratios)) if len(ratios) else -1
                if k >= 0 and ratios[k] < step - DTOL:
                    step = max(float(ratios[k]), 0.0)
                    r = k
                    below = hit_lo
            if not np.isfinite(step):
                raise SimplexError("unbounded direction in primal cleanup")
            stall = stall + 1 if step <= DTOL else 0
            moved = True
            if r < 0:
                # no basic bound blocks before the entering bound: flip it
                self.xB -= self.T[:, e] * (sigma * step)
                self.stat[e] = AT_UP if sigma > 0 else AT_LO
            else:
                self._pivot(r, e, below)

    def _pivot(self, r: int, e: int, below: bool) -> None:
        alpha_re = self.T[r, e]
        target = self.lo[self.basis[r]] if below else self.up[self.basis[r]]
        enter_val = self.lo[e] if self.stat[e] == AT_LO else self.up[e]
        delta = (self.xB[r] - target) / alpha_re
        self.xB -= self.T[:, e] * delta
        leave = self.basis[r]
        self.stat[leave] = AT_LO if below else AT_UP
        self.basis[r] = e
        self.stat[e] = BASIC
        self.xB[r] = enter_val + delta
        trow = self.T[r] / alpha_re
        col = self.T[:, e].copy()
        col[r] = 0.0
        self.T -= np.outer(col, trow)
        self.T[r] = trow
        ze = self.z[e]
        if ze != 0.0:
            self.z -= ze * trow
        self.z[e] = 0.0
        self.pivots += 1

    def refresh(self) -> None:
        """Rebuild tableau, basic values, and reduced costs from the basis."""
        B = self._A_orig[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis") from exc
        self.T = Binv @ self._A_orig
        ncols = self.n + self.m
        x_n = self.nonbasic_values()
        mask = np.ones(ncols, dtype=bool)
        mask[self.basis] = False
        self.xB = Binv @ (self._rhs - self._A_orig[:, mask] @ x_n[mask])
        self.z = self.c - self.c[self.basis] @ self.T
        self.z[self.basis] = 0.0

    def residual(self) -> float:
        """Worst constraint violation of the current point, in original data."""
        if self.m == 0:
            return 0.0
        x = self.x_full()
        r = self._A_orig @ x - self._rhs
        return float(np.abs(r).max())


def solve_lp(c, A, senses, rhs, lo, up) -> tuple[str, np.ndarray | None, float | None]:
    """One-shot convenience wrapper. Returns (status, x, objective)."""
    lp = DenseLp(c, A, list(senses), rhs, lo, up)
    status = lp.solve()
    if status != OPTIMAL:
        return status, None, None
    return OPTIMAL, lp.x(), lp.objective()
