"""Mixed-integer linear programming on top of the dual-simplex engine.

Branch and bound walks the tree on a single LP tableau: fixing or releasing a
variable bound never changes reduced costs, so the basis left behind by one
node is a valid dual-feasible warm start for any other. Nodes therefore store
only their bound fixings and the solver diffs against whatever is currently
applied.

Constraint groups marked lazy stay out of the LP until an integer candidate
violates one of them; the group's rows (and any binaries that appear only
there) then join the active system for the rest of the search. Activation
happens before a candidate can become the incumbent, so laziness never costs
exactness, it only defers work for disjunctions that never bind.

Big-M constants are sized from variable bounds, which the LP engine requires
to be finite; a bound box loose enough to need an enormous M is reported as an
error instead of silently degrading the relaxation.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .simplex import INFEASIBLE, OPTIMAL, DenseLp

INT_TOL = 1e-6
DEFAULT_GAP = 1e-9
MAX_BIG_M = 1e7

LIMIT = "LIMIT"


class MilpError(RuntimeError):
    pass


@dataclass
class _Row:
    name: str
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float
    group: str | None


@dataclass
class _LazyCheck:
    """Semantic test for a lazy disjunction.

    `fn(x)` returns an assignment for the group's own binaries that satisfies
    the rows named in `owned`, or None when no assignment can (the group must
    then be activated). Rows of the group not owned by any check are judged
    literally.
    """

    owned: frozenset[str]
    fn: object


@dataclass
class MilpResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    nodes: int
    pivots: int
    activated_groups: tuple[str, ...]

    def value(self, j: int) -> float:
        return float(self.x[j])


class MilpModel:
    """Incrementally built model: variables, rows, and lazy row groups."""

    def __init__(self):
        self.names: list[str] = []
        self.lo: list[float] = []
        self.up: list[float] = []
        self.obj: list[float] = []
        self.is_int: list[bool] = []
        self.priority: list[int] = []
        self.rows: list[_Row] = []
        self.lazy_checks: dict[str, list[_LazyCheck]] = {}
        self.choices: list[tuple[int, ...]] = []
        self._by_name: dict[str, int] = {}

    @property
    def n(self) -> int:
        return len(self.names)

    def add_var(
        self,
        name: str,
        lo: float,
        up: float,
        obj: float = 0.0,
        integer: bool = False,
        priority: int = 0,
    ) -> int:
        if name in self._by_name:
            raise MilpError(f"duplicate variable {name!r}")
        if not (np.isfinite(lo) and np.isfinite(up)):
            raise MilpError(f"variable {name!r} needs finite bounds")
        j = len(self.names)
        self.names.append(name)
        self.lo.append(float(lo))
        self.up.append(float(up))
        self.obj.append(float(obj))
        self.is_int.append(bool(integer))
        self.priority.append(int(priority))
        self._by_name[name] = j
        return j

    def add_binary(self, name: str, obj: float = 0.0, priority: int = 0) -> int:
        return self.add_var(name, 0.0, 1.0, obj=obj, integer=True, priority=priority)

    def var(self, name: str) -> int:
        return self._by_name[name]

    def add_choice(self, members: list[int]) -> None:
        """Declare that at least one of these binaries is 1 in any solution.

        The claim itself must be enforced by rows; registering it here lets
        branch and bound split on the whole disjunction at once instead of
        zero/one on a single member, which is far stronger when most members
        are interchangeable for the relaxation.
        """
        for j in members:
            if not self.is_int[j]:
                raise MilpError(f"choice member {self.names[j]!r} not integer")
        self.choices.append(tuple(members))

    def add_constr(
        self,
        name: str,
        terms: list[tuple[int, float]],
        sense: str,
        rhs: float,
        group: str | None = None,
    ) -> None:
        if sense not in ("<=", ">=", "=="):
            raise MilpError(f"unknown sense {sense!r}")
        terms = [(j, c) for j, c in terms if c != 0.0]
        idx = np.array([j for j, _ in terms], dtype=int)
        coef = np.array([c for _, c in terms], dtype=float)
        self.rows.append(_Row(name, idx, coef, sense, float(rhs), group))

    # -- big-M encodings -------------------------------------------------------

    def _extreme(self, idx, coef, largest: bool) -> float:
        lo = np.array([self.lo[j] for j in idx])
        up = np.array([self.up[j] for j in idx])
        if largest:
            return float(np.sum(np.maximum(coef * lo, coef * up)))
        return float(np.sum(np.minimum(coef * lo, coef * up)))

    def add_implication(
        self,
        name: str,
        guard: int,
        terms: list[tuple[int, float]],
        sense: str,
        rhs: float,
        big_m: float | None = None,
        group: str | None = None,
    ) -> None:
        """guard = 1 forces (terms sense rhs); guard = 0 leaves it slack."""
        idx = [j for j, _ in terms]
        coef = np.array([c for _, c in terms])
        if sense == "<=":
            need = self._extreme(idx, coef, largest=True) - rhs
        elif sense == ">=":
            need = rhs - self._extreme(idx, coef, largest=False)
        else:
            raise MilpError("implication rows must be inequalities")
        need = max(need, 0.0)
        if big_m is None:
            big_m = need
        elif big_m < need - 1e-12:
            raise MilpError(
                f"big-M {big_m} too small for {name!r}; bounds require {need}"
            )
        if big_m > MAX_BIG_M:
            raise MilpError(
                f"big-M {big_m} for {name!r} exceeds {MAX_BIG_M}; tighten bounds"
            )
        if sense == "<=":
            self.add_constr(name, terms + [(guard, big_m)], "<=", rhs + big_m, group)
        else:
            self.add_constr(name, terms + [(guard, -big_m)], ">=", rhs - big_m, group)

    def add_avoidance(
        self,
        prefix: str,
        facets_a: np.ndarray,
        facets_b: np.ndarray,
        point: list[list[tuple[int, float]]],
        margin: float = 0.0,
        group: str | None = None,
        priority: int = 0,
    ) -> list[int]:
        """Force the affine point outside a polytope given as A p <= b.

        One binary per facet; an active binary forces that facet's inequality
        to hold with the margin, and at least one must be active. `point` gives
        each coordinate of p as variable terms. Returns the binary indices.
        """
        k = len(facets_b)
        ds = [
            self.add_binary(f"{prefix}_out{f}", priority=priority) for f in range(k)
        ]
        for f in range(k):
            terms: dict[int, float] = {}
            for dim, coords in enumerate(point):
                for j, c in coords:
                    terms[j] = terms.get(j, 0.0) + facets_a[f, dim] * c
            self.add_implication(
                f"{prefix}_esc{f}",
                ds[f],
                list(terms.items()),
                ">=",
                float(facets_b[f]) + margin,
                group=group,
            )
        self.add_constr(
            f"{prefix}_pick", [(d, 1.0) for d in ds], ">=", 1.0, group=group
        )
        self.add_choice(ds)
        if group is not None:
            A = np.array(facets_a, dtype=float)
            b = np.array(facets_b, dtype=float)
            pt = [list(coords) for coords in point]
            ds_t = tuple(ds)

            def completer(x):
                coords = np.array([sum(c * x[j] for j, c in dim) for dim in pt])
                sat = np.nonzero(A @ coords >= b + margin - 1e-9)[0]
                if len(sat) == 0:
                    return None
                out = {d: 0.0 for d in ds_t}
                out[ds_t[int(sat[0])]] = 1.0
                return out

            owned = frozenset(
                {f"{prefix}_esc{f}" for f in range(k)} | {f"{prefix}_pick"}
            )
            self.lazy_checks.setdefault(group, []).append(_LazyCheck(owned, completer))
        return ds

    # -- text dump -------------------------------------------------------------

    def write_lp(self) -> str:
        """Deterministic LP-format dump, mainly for eyeballing models."""

        def term(c, name, lead):
            sign = "-" if c < 0 else ("" if lead else "+")
            mag = abs(c)
            return f"{sign} {mag:.12g} {name}".strip()

        out = ["Minimize", " obj:"]
        parts = [
            term(c, self.names[j], j == 0)
            for j, c in enumerate(self.obj)
            if c != 0.0
        ]
        out[-1] += " " + (" ".join(parts) if parts else "0 " + self.names[0])
        out.append("Subject To")
        rel = {"<=": "<=", ">=": ">=", "==": "="}
        for row in self.rows:
            body = " ".join(
                term(c, self.names[j], k == 0)
                for k, (j, c) in enumerate(zip(row.idx, row.coef))
            )
            tag = f" [lazy={row.group}]" if row.group else ""
            out.append(f" {row.name}:{tag} {body} {rel[row.sense]} {row.rhs:.12g}")
        out.append("Bounds")
        for j, name in enumerate(self.names):
            out.append(f" {self.lo[j]:.12g} <= {name} <= {self.up[j]:.12g}")
        gens = [self.names[j] for j in range(self.n) if self.is_int[j]]
        if gens:
            out.append("Generals")
            out.append(" " + " ".join(gens))
        out.append("End")
        return "\n".join(out) + "\n"

    # -- solving ---------------------------------------------------------------

    def _dense_rows(self, rows: list[_Row]) -> tuple[np.ndarray, list[str], np.ndarray]:
        A = np.zeros((len(rows), self.n))
        for i, row in enumerate(rows):
            A[i, row.idx] = row.coef
        return A, [r.sense for r in rows], np.array([r.rhs for r in rows])

    def solve(
        self,
        gap: float = DEFAULT_GAP,
        node_limit: int = 200_000,
        time_limit: float | None = None,
        backend: str = "builtin",
    ) -> MilpResult:
        if backend == "scipy":
            return _solve_scipy(self)
        if backend != "builtin":
            raise MilpError(f"unknown backend {backend!r}")
        return _BranchAndBound(self, gap, node_limit, time_limit).run()


class _BranchAndBound:
    def __init__(self, model: MilpModel, gap, node_limit, time_limit):
        self.model = model
        self.gap = gap
        self.node_limit = node_limit
        self.deadline = None if time_limit is None else time.monotonic() + time_limit
        self.groups: dict[str, list[_Row]] = {}
        active = []
        for row in model.rows:
            if row.group is None:
                active.append(row)
            else:
                self.groups.setdefault(row.group, []).append(row)
        self.activated: list[str] = []
        self.int_idx = np.array(
            [j for j in range(model.n) if model.is_int[j]], dtype=int
        )
        self.root_lo = np.array(model.lo)
        self.root_up = np.array(model.up)
        ii = self.int_idx
        self.root_lo[ii] = np.ceil(self.root_lo[ii] - 1e-9)
        self.root_up[ii] = np.floor(self.root_up[ii] + 1e-9)
        self.crossed = bool(np.any(self.root_lo > self.root_up))
        if not self.crossed:
            A, senses, rhs = model._dense_rows(active)
            self.lp = DenseLp(
                np.array(model.obj), A, senses, rhs, self.root_lo, self.root_up
            )
        self.prio = np.array([model.priority[j] for j in self.int_idx])
        self.choice_of: dict[int, tuple[int, ...]] = {}
        for members in model.choices:
            for j in members:
                self.choice_of.setdefault(j, members)
        self.applied: dict[int, tuple[float, float]] = {}
        self.best_x: np.ndarray | None = None
        self.best_obj = np.inf
        self.root_bound = -np.inf
        self.nodes = 0

    def _goto(self, fixings: dict[int, tuple[float, float]]) -> None:
        for j in [j for j in self.applied if j not in fixings]:
            self.lp.set_bounds(j, float(self.root_lo[j]), float(self.root_up[j]))
            del self.applied[j]
        for j, bnd in fixings.items():
            if self.applied.get(j) != bnd:
                self.lp.set_bounds(j, *bnd)
                self.applied[j] = bnd

    def _fractional(self, x: np.ndarray) -> np.ndarray:
        if len(self.int_idx) == 0:
            return np.zeros(0, dtype=int)
        v = x[self.int_idx]
        frac = np.abs(v - np.round(v))
        return np.nonzero(frac > INT_TOL)[0]

    def _check_groups(self, x: np.ndarray) -> tuple[list[str], dict[int, float]]:
        """Inactive groups violated at x, plus binary completions for the rest."""
        bad = []
        completions: dict[int, float] = {}
        for gname, rows in self.groups.items():
            if gname in self.activated:
                continue
            checks = self.model.lazy_checks.get(gname, [])
            owned: set[str] = set()
            comps: dict[int, float] = {}
            ok = True
            for chk in checks:
                got = chk.fn(x)
                if got is None:
                    ok = False
                    break
                comps.update(got)
                owned |= chk.owned
            if ok:
                x2 = x if not comps else x.copy()
                for j, v in comps.items():
                    x2[j] = v
                for row in rows:
                    if row.name in owned:
                        continue
                    lhs = float(row.coef @ x2[row.idx])
                    if (
                        (row.sense == "<=" and lhs > row.rhs + 1e-7)
                        or (row.sense == ">=" and lhs < row.rhs - 1e-7)
                        or (row.sense == "==" and abs(lhs - row.rhs) > 1e-7)
                    ):
                        ok = False
                        break
            if ok:
                completions.update(comps)
            else:
                bad.append(gname)
        return bad, completions

    def _activate(self, gname: str) -> None:
        A, senses, rhs = self.model._dense_rows(self.groups[gname])
        self.lp.add_rows(A, senses, rhs)
        self.activated.append(gname)

    def _accept(self, x: np.ndarray, obj: float) -> None:
        snapped = x.copy()
        snapped[self.int_idx] = np.round(snapped[self.int_idx])
        if obj < self.best_obj:
            self.best_obj = obj
            self.best_x = snapped

    def _branch_var(self, x: np.ndarray, fracs: np.ndarray) -> int:
        top = self.prio[fracs].max()
        pool = fracs[self.prio[fracs] == top]
        v = x[self.int_idx[pool]]
        dist = np.abs(np.abs(v - np.floor(v)) - 0.5)
        return int(self.int_idx[pool[np.argmin(dist)]])

    def _repair_dive(self, fixings: dict, x: np.ndarray) -> None:
        """Heuristic hunt: round every open disjunction at once and re-solve.

        Trajectories hug region boundaries, so fixing one facet binary just
        shifts the fractionality to a neighbour and a plain dive never closes.
        Committing all fractional choices to their relaxation-preferred member
        in one step usually lands an integral plan within a few rounds. Only
        the incumbent is kept; the tree itself is left untouched.
        """
        repair = dict(fixings)
        for _ in range(12):
            fracs = self._fractional(x)
            if len(fracs) == 0:
                bad, completions = self._check_groups(x)
                if bad:
                    for g in bad:
                        self._activate(g)
                elif self.lp.residual() > 1e-6:
                    self.lp.refresh()
                else:
                    obj = self.lp.objective()
                    if completions:
                        x = x.copy()
                        for j, v in completions.items():
                            obj += self.model.obj[j] * (v - x[j])
                            x[j] = v
                    if obj < self.best_obj:
                        self._accept(x, obj)
                    return
            else:
                changed = False
                done: set[tuple[int, ...]] = set()
                for k in fracs:
                    j = int(self.int_idx[k])
                    members = self.choice_of.get(j)
                    if members is None:
                        v = float(np.round(x[j]))
                        repair[j] = (v, v)
                        changed = True
                        continue
                    if members in done:
                        continue
                    done.add(members)
                    committed = False
                    free = []
                    for d in members:
                        lo, up = repair.get(d, (self.root_lo[d], self.root_up[d]))
                        if lo >= 0.5:
                            committed = True
                            break
                        if up >= 0.5:
                            free.append(d)
                    if committed:
                        continue
                    if not free:
                        return
                    pick = max(free, key=lambda d: (x[d], -d))
                    for d in free:
                        repair[d] = (1.0, 1.0) if d == pick else (0.0, 0.0)
                    changed = True
                if not changed:
                    return
                self._goto(repair)
            if self.lp.solve() != OPTIMAL:
                return
            if self.lp.objective() >= self.best_obj - self.gap:
                return
            x = self.lp.x()

    def _choice_children(self, j: int, x, fixings) -> list[dict] | None:
        """Split on the whole disjunction containing binary j, if any.

        Children enforce one member each and forbid the members tried before
        it, partitioning the binary assignments. Fixing a single member to 0
        barely changes the relaxation, so plain 0/1 branching wades through
        chains of such nodes; this gets one real decision per level instead.
        """
        members = self.choice_of.get(j)
        if members is None:
            return None
        free = []
        for d in members:
            lo, up = self.applied.get(d, (self.root_lo[d], self.root_up[d]))
            if lo >= 0.5:
                return None  # already satisfied, yet j went fractional: punt
            if up >= 0.5:
                free.append(d)
        order = sorted(free, key=lambda d: (-x[d], d))
        kids = []
        for r, d in enumerate(order):
            kid = dict(fixings)
            kid[d] = (1.0, 1.0)
            for other in order[:r]:
                kid[other] = (0.0, 0.0)
            kids.append(kid)
        return kids

    def run(self) -> MilpResult:
        if self.crossed:
            return MilpResult(INFEASIBLE, None, None, 0, 0, ())
        frontier: list[tuple[float, int, dict]] = []
        seq = 0
        heapq.heappush(frontier, (-np.inf, seq, {}))
        hit_limit = False
        # depth-first while no incumbent exists: a dying dive then backtracks
        # to its deepest open sibling, where the conflict that killed it is
        # still addressable, instead of replaying a fresh path from the root.
        # A dive can also be trapped under an early wrong turn whose whole
        # subtree is infeasible; after too long without a leaf, continue from
        # the shallowest open node instead, which restarts the hunt elsewhere.
        dfs = True
        dead = 0
        repairs = 40
        while frontier and not hit_limit:
            if dfs and self.best_x is not None:
                heapq.heapify(frontier)
                dfs = False
            if dfs:
                if dead > 200:
                    # trapped: resume from the most promising open node
                    dead = 0
                    at = min(range(len(frontier)), key=lambda k: frontier[k][0])
                    bound, _, fixings = frontier.pop(at)
                else:
                    bound, _, fixings = frontier.pop()
            else:
                bound, _, fixings = heapq.heappop(frontier)
                if bound >= self.best_obj - self.gap:
                    break
            # dive: follow one child chain depth-first, queueing each sibling,
            # so an incumbent appears after ~depth nodes and starts pruning the
            # frontier; pure best-bound order stalls on near-tied objectives
            while fixings is not None:
                if self.nodes >= self.node_limit or (
                    self.deadline is not None and time.monotonic() > self.deadline
                ):
                    hit_limit = True
                    break
                self.nodes += 1
                dead += 1
                self._goto(fixings)
                nxt = None
                while True:  # re-solve loop for lazy activations at this node
                    if self.lp.solve() != OPTIMAL:
                        break
                    obj = self.lp.objective()
                    if self.nodes == 1:
                        self.root_bound = obj
                    if obj >= self.best_obj - self.gap:
                        break
                    x = self.lp.x()
                    fracs = self._fractional(x)
                    if len(fracs) == 0:
                        bad, completions = self._check_groups(x)
                        if bad:
                            for g in bad:
                                self._activate(g)
                            dead = 0  # new rows refresh the region's prospects
                            continue
                        if self.lp.residual() > 1e-6:
                            self.lp.refresh()
                            continue
                        if completions:
                            x = x.copy()
                            for j, v in completions.items():
                                obj += self.model.obj[j] * (v - x[j])
                                x[j] = v
                        self._accept(x, obj)
                        dead = 0
                        break
                    if repairs > 0 and self.best_obj > self.root_bound + self.gap:
                        repairs -= 1
                        was = self.best_obj
                        self._repair_dive(fixings, x)
                        self._goto(fixings)
                        if self.best_obj < was:
                            # incumbent improved; re-solve so the node's own
                            # state is current before any further branching
                            if self.lp.solve() != OPTIMAL:
                                break
                            obj = self.lp.objective()
                            if obj >= self.best_obj - self.gap:
                                break
                            x = self.lp.x()
                            fracs = self._fractional(x)
                            if len(fracs) == 0:
                                continue
                    j = self._branch_var(x, fracs)
                    kids = self._choice_children(j, x, fixings)
                    if kids is not None:
                        if not kids:
                            break  # every member ruled out, no completion
                        hunting = self.best_obj > self.root_bound + self.gap
                        if hunting:
                            # while no incumbent close to the root bound is
                            # known, buy accuracy: probe each child's LP bound
                            # and dive into the true best, not the
                            # relaxation's fractional pick
                            probed = []
                            for r, kid in enumerate(kids[:8]):
                                self._goto(kid)
                                if self.lp.solve() == OPTIMAL:
                                    probed.append((self.lp.objective(), r, kid))
                            probed.sort()
                            entries = [(obj, kid) for kid in reversed(kids[8:])]
                            entries += [(b, kid) for b, _, kid in reversed(probed[1:])]
                            for b, kid in entries:
                                seq += 1
                                if dfs:
                                    frontier.append((b, seq, kid))
                                else:
                                    heapq.heappush(frontier, (b, seq, kid))
                            nxt = probed[0][2] if probed else None
                        else:
                            for kid in kids[1:]:
                                seq += 1
                                heapq.heappush(frontier, (obj, seq, kid))
                            nxt = kids[0]
                        break
                    lo_j = self.applied.get(j, (self.root_lo[j], self.root_up[j]))
                    floor = float(np.floor(x[j] + INT_TOL))
                    down = dict(fixings)
                    down[j] = (lo_j[0], floor)
                    up = dict(fixings)
                    up[j] = (floor + 1.0, lo_j[1])
                    near, far = (down, up) if x[j] - floor <= 0.5 else (up, down)
                    seq += 1
                    if dfs:
                        frontier.append((obj, seq, far))
                    else:
                        heapq.heappush(frontier, (obj, seq, far))
                    nxt = near
                    break
                fixings = nxt
        if self.best_x is not None:
            status = LIMIT if hit_limit else OPTIMAL
            return MilpResult(
                status,
                self.best_x,
                float(self.best_obj),
                self.nodes,
                self.lp.pivots,
                tuple(self.activated),
            )
        status = LIMIT if hit_limit else INFEASIBLE
        return MilpResult(status, None, None, self.nodes, self.lp.pivots, tuple(self.activated))


def _solve_scipy(model: MilpModel) -> MilpResult:
    """External backend; lazy rows are included up front."""
    from scipy.optimize import LinearConstraint, milp
    from scipy.optimize import Bounds as ScipyBounds

    A, senses, rhs = model._dense_rows(model.rows)
    lb = np.array([-np.inf if s == "<=" else r for s, r in zip(senses, rhs)])
    ub = np.array([np.inf if s == ">=" else r for s, r in zip(senses, rhs)])
    cons = [LinearConstraint(A, lb, ub)] if len(rhs) else []
    res = milp(
        c=np.array(model.obj),
        constraints=cons,
        integrality=np.array(model.is_int, dtype=int),
        bounds=ScipyBounds(np.array(model.lo), np.array(model.up)),
    )
    groups = tuple(sorted({r.group for r in model.rows if r.group}))
    if res.status == 2:
        return MilpResult(INFEASIBLE, None, None, 0, 0, groups)
    if res.status != 0:
        return MilpResult(LIMIT, None, None, 0, 0, groups)
    return MilpResult(OPTIMAL, res.x, float(res.fun), 0, 0, groups)
