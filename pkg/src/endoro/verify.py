"""Policy verification and ground-truth oracles.

worst_case_violation maximizes each robust row's residual over the
outer-approximation polytope with the concrete policy substituted (or, in
"cells" mode, exactly over the true lifted graph by enumerating segment
cells). oracle_optimum computes a fully adjustable lower bound by enumerating
tabular trigger policies over observation-equivalence classes and solving an
extensive-form MILP over scenario trees built from slice vertices.
sample_scenarios draws fixed-seed uniform samples from the triggers-on set by
rejection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from endoro import mip
from endoro.counterpart import assemble_compact
from endoro.lifting import LiftedSpace, hull_rows
from endoro.model import (
    BINARY,
    CONST,
    CONST_AUX,
    CONTINUOUS,
    ProblemSpec,
    Structure,
    WorstCaseObjective,
)
from endoro.policy import DecisionRulePolicy, build_skeleton

ROUND = 9


@dataclass
class Scenario:
    weight: float
    values: dict[str, float]

    def induced_observations(self, triggers: dict[str, float], struct: Structure) -> dict[str, float]:
        """Copy values under a concrete trigger assignment: source value when
        the gate is on, zero otherwise."""
        out = {}
        for aid in struct.aux_order:
            a = struct.aux_by_id[aid]
            src = 1.0 if a.source == CONST else self.values.get(a.source, 0.0)
            gate = 1.0 if a.gate is None else triggers.get(a.gate, 0.0)
            out[aid] = src * gate
        return out


@dataclass
class RowViolation:
    name: str
    stage: int
    violation: float
    witness: dict[str, float] = field(default_factory=dict)


@dataclass
class ViolationReport:
    rows: list[RowViolation] = field(default_factory=list)

    @property
    def overall(self) -> float:
        return max((r.violation for r in self.rows), default=0.0)

    def worst(self) -> RowViolation | None:
        return max(self.rows, key=lambda r: r.violation, default=None)

    def to_csv(self) -> str:
        lines = ["row,stage,violation,witness"]
        for r in self.rows:
            wit = ";".join(f"{k}={v:.9g}" for k, v in sorted(r.witness.items()))
            lines.append(f"{r.name},{r.stage},{r.violation:.12g},{wit}")
        return "\n".join(lines) + "\n"


class SizeGuardError(ValueError):
    """Instance too large for the exhaustive oracle."""


# ---------------------------------------------------------------------------
# Worst-case violation
# ---------------------------------------------------------------------------

def worst_case_violation(problem: ProblemSpec, policy: DecisionRulePolicy,
                         mode: str = "outer") -> ViolationReport:
    if mode == "outer":
        return _violation_outer(problem, policy)
    if mode == "cells":
        return _violation_cells(problem, policy)
    raise ValueError(f"unknown mode {mode!r}")


def _rule_coord_terms(policy: DecisionRulePolicy, vid: str) -> dict[tuple[str, int], float]:
    """var value = sum of coef * lifted coordinate (aux, comp)."""
    sk = policy.skeleton
    out: dict[tuple[str, int], float] = {}
    for aid, idxs in sk.var_blocks(vid):
        for j in idxs:
            c = float(policy.values[j])
            if c != 0.0:
                key = (aid, sk.slots[j].comp)
                out[key] = out.get(key, 0.0) + c
    return out


def _violation_outer(problem: ProblemSpec, policy: DecisionRulePolicy) -> ViolationReport:
    sk = policy.skeleton
    s = sk.struct
    compact = assemble_compact(problem, sk)
    report = ViolationReport()
    for t in compact.stages:
        m = mip.MipModel()
        xi_idx = {pid: m.add_var(f"xi:{pid}", -mip.INF, mip.INF) for pid in s.raw_upto(t)}
        coord_idx: dict[tuple[str, int], int] = {}
        zeta_idx: dict[str, int] = {}
        for aid in s.aux_upto(t):
            sp = s.lifted[aid]
            zeta_idx[aid] = m.add_var(f"z:{aid}", -mip.INF, mip.INF)
            for comp in range(sp.r + sp.g):
                coord_idx[(aid, comp)] = m.add_var(f"l:{aid}:{comp}", -mip.INF, mip.INF)
            hr = hull_rows(sp)
            lam = [m.add_var(f"lam:{aid}:{k}", 0.0, mip.INF) for k in range(len(hr.vertices))]
            cols = [zeta_idx[aid]] + [coord_idx[(aid, c)] for c in range(sp.r + sp.g)] + lam
            for row, rhs in hr.rows:
                m.add_row(f"hull:{aid}", {cols[k]: c for k, c in enumerate(row) if c != 0.0},
                          mip.EQ, rhs)
        for srow in problem.set_rows:
            if not srow.applies_at(t):
                continue
            coefs: dict[int, float] = {}
            for pid, c in srow.xi:
                coefs[xi_idx[pid]] = coefs.get(xi_idx[pid], 0.0) + c
            for aid, c in srow.zeta:
                coefs[zeta_idx[aid]] = coefs.get(zeta_idx[aid], 0.0) + c
            for vid, u in srow.dec:
                for (aid, comp), c in _rule_coord_terms(policy, vid).items():
                    k = coord_idx[(aid, comp)]
                    coefs[k] = coefs.get(k, 0.0) - u * c
            m.add_row(srow.name, coefs, mip.LE, srow.const)
        for crow in compact.rows_at(t):
            obj: dict[int, float] = {}
            for vid, a in crow.var_terms:
                for (aid, comp), c in _rule_coord_terms(policy, vid).items():
                    k = coord_idx[(aid, comp)]
                    obj[k] = obj.get(k, 0.0) + a * c
            for pid, b in crow.B:
                obj[xi_idx[pid]] = obj.get(xi_idx[pid], 0.0) - b
            m.obj = {k: -c for k, c in obj.items()}  # maximize residual
            sol = mip.solve_lp(m)
            if sol.status == "unbounded":
                raise ValueError(f"unbounded residual for row {crow.name} at stage {t}")
            if sol.status == "infeasible":
                continue  # empty stage set: row vacuous
            witness = {pid: float(sol.x[xi_idx[pid]]) for pid in xi_idx}
            witness.update({aid: float(sol.x[zeta_idx[aid]]) for aid in zeta_idx})
            report.rows.append(RowViolation(crow.name, t, -sol.objective, witness))
    return report


def _segment_cells(spaces: dict[str, LiftedSpace]):
    ids = sorted(spaces)
    ranges = [range(spaces[a].r) for a in ids]
    for combo in itertools.product(*ranges):
        yield dict(zip(ids, combo))


def _violation_cells(problem: ProblemSpec, policy: DecisionRulePolicy) -> ViolationReport:
    """Exact maximization over the true lifted graph: per segment cell the
    lifted coordinates are affine in zeta, so each (cell, row) is one LP."""
    sk = policy.skeleton
    s = sk.struct
    compact = assemble_compact(problem, sk)
    report = ViolationReport()
    for t in compact.stages:
        auxs = {aid: s.lifted[aid] for aid in s.aux_upto(t)}
        ncells = int(np.prod([sp.r for sp in auxs.values()])) if auxs else 1
        if ncells > 4096:
            raise SizeGuardError(f"{ncells} segment cells at stage {t}")
        best: dict[str, RowViolation] = {}
        for cell in _segment_cells(auxs):
            m = mip.MipModel()
            xi_idx = {pid: m.add_var(f"xi:{pid}", -mip.INF, mip.INF) for pid in s.raw_upto(t)}
            zeta_idx = {}
            affine: dict[str, list[tuple[float, float]]] = {}  # coord = a*zeta + b
            for aid, sp in auxs.items():
                k = cell[aid]
                p = sp.grid
                zeta_idx[aid] = m.add_var(f"z:{aid}", p[k], p[k + 1])
                rows = []
                for j in range(sp.r):  # zbar
                    if j < k:
                        rows.append((0.0, p[j + 1] - p[j]))
                    elif j == k:
                        rows.append((1.0, -p[j]))
                    else:
                        rows.append((0.0, 0.0))
                for j in range(1, sp.g + 1):  # zhat, one-sided limit in the cell
                    if sp.r == 1:
                        rows.append((0.0, 1.0))
                    else:
                        rows.append((0.0, 1.0 if j <= k else 0.0))
                affine[aid] = rows

            def coord_expr(aid, comp):
                a, b = affine[aid][comp]
                return zeta_idx[aid], a, b

            for srow in problem.set_rows:
                if not srow.applies_at(t):
                    continue
                coefs: dict[int, float] = {}
                const = srow.const
                for pid, c in srow.xi:
                    coefs[xi_idx[pid]] = coefs.get(xi_idx[pid], 0.0) + c
                for aid, c in srow.zeta:
                    coefs[zeta_idx[aid]] = coefs.get(zeta_idx[aid], 0.0) + c
                for vid, u in srow.dec:
                    for (aid, comp), c in _rule_coord_terms(policy, vid).items():
                        zi, a, b = coord_expr(aid, comp)
                        coefs[zi] = coefs.get(zi, 0.0) - u * c * a
                        const += u * c * b
                m.add_row(srow.name, coefs, mip.LE, const)
            for crow in compact.rows_at(t):
                obj: dict[int, float] = {}
                base = 0.0
                for vid, a_coef in crow.var_terms:
                    for (aid, comp), c in _rule_coord_terms(policy, vid).items():
                        zi, a, b = coord_expr(aid, comp)
                        obj[zi] = obj.get(zi, 0.0) + a_coef * c * a
                        base += a_coef * c * b
                for pid, b_coef in crow.B:
                    obj[xi_idx[pid]] = obj.get(xi_idx[pid], 0.0) - b_coef
                m.obj = {k: -c for k, c in obj.items()}
                sol = mip.solve_lp(m)
                if sol.status == "infeasible":
                    continue
                if sol.status == "unbounded":
                    raise ValueError(f"unbounded residual for row {crow.name}")
                viol = -sol.objective + base
                witness = {pid: float(sol.x[xi_idx[pid]]) for pid in xi_idx}
                witness.update({aid: float(sol.x[zeta_idx[aid]]) for aid in zeta_idx})
                cur = best.get(crow.name)
                if cur is None or viol > cur.violation:
                    best[crow.name] = RowViolation(crow.name, t, viol, witness)
        report.rows.extend(best.values())
    return report


# ---------------------------------------------------------------------------
# Scenario sampling
# ---------------------------------------------------------------------------

def sample_scenarios(problem: ProblemSpec, seed: int, n: int,
                     max_tries: int = 2_000_000) -> list[Scenario]:
    """Uniform rejection sampling from the triggers-on uncertainty set.

    Samples the raw (non-constant) parameters from their boxes and accepts
    when every xi-only set row holds with all decision coefficients set to 1;
    rows involving auxiliary copies are identities under triggers-on and are
    skipped. Deterministic for a fixed seed; weights are 1/n.
    """
    if n == 0:
        return []
    s = problem.structure()
    free = [p for p in problem.params if p.id != CONST]
    rows = []
    for r in problem.set_rows:
        if r.zeta:
            continue
        coefs = {pid: c for pid, c in r.xi if pid != CONST}
        const = r.const + sum(-c for pid, c in r.xi if pid == CONST)
        const += sum(c for _, c in r.dec)  # triggers on
        rows.append((coefs, const))
    rng = np.random.default_rng(seed)
    out: list[Scenario] = []
    tries = 0
    batch = max(4 * n, 256)
    while len(out) < n and tries < max_tries:
        draws = {p.id: rng.uniform(p.lo, p.hi, size=batch) for p in free}
        tries += batch
        ok = np.ones(batch, dtype=bool)
        for coefs, const in rows:
            act = np.zeros(batch)
            for pid, c in coefs.items():
                act += c * draws[pid]
            ok &= act <= const + 1e-9
        for k in np.nonzero(ok)[0]:
            if len(out) >= n:
                break
            out.append(Scenario(1.0 / n, {p.id: float(draws[p.id][k]) for p in free}))
        if tries >= 4096 and len(out) / tries < 1e-4:
            raise ValueError("rejection acceptance rate below 1e-4; tighten the box")
    if len(out) < n:
        raise ValueError("rejection acceptance rate below 1e-4; tighten the box")
    return out


def scenarios_to_csv(scenarios: list[Scenario]) -> str:
    if not scenarios:
        return "weight\n"
    keys = sorted(scenarios[0].values)
    lines = ["weight," + ",".join(keys)]
    for sc in scenarios:
        lines.append(f"{sc.weight:.12g}," + ",".join(f"{sc.values[k]:.12g}" for k in keys))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Fully adjustable oracle (lower bound for minimization)
# ---------------------------------------------------------------------------

def _polytope_vertices(rows: list[tuple[dict[int, float], float]], n: int,
                       lo: np.ndarray, hi: np.ndarray, guard: int = 300_000) -> list[np.ndarray]:
    """Vertices of {x: rows, lo <= x <= hi} by basic-solution enumeration."""
    A = []
    b = []
    for coefs, rhs in rows:
        r = np.zeros(n)
        for j, c in coefs.items():
            r[j] = c
        A.append(r)
        b.append(rhs)
    for j in range(n):
        if np.isfinite(lo[j]):
            e = np.zeros(n)
            e[j] = -1.0
            A.append(e)
            b.append(-lo[j])
        if np.isfinite(hi[j]):
            e = np.zeros(n)
            e[j] = 1.0
            A.append(e)
            b.append(hi[j])
    A = np.array(A)
    b = np.array(b)
    m = len(b)
    if n == 0:
        return [np.zeros(0)]
    from math import comb

    if comb(m, n) > guard:
        raise SizeGuardError(f"vertex enumeration too large: C({m},{n})")
    verts: list[np.ndarray] = []
    seen = set()
    for combo in itertools.combinations(range(m), n):
        M = A[list(combo)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, b[list(combo)])
        if np.all(A @ x <= b + 1e-7):
            key = tuple(np.round(x, ROUND))
            if key not in seen:
                seen.add(key)
                verts.append(x)
    return verts


def _stage_slice_vertices(problem, s, t, prefix: dict[str, float],
                          coupler_vals: dict[str, float]) -> list[dict[str, float]]:
    """Vertex realizations of the stage-t set slice given earlier coordinates
    and coupler values, split by lifting segment cells of the new copies."""
    new_raw = [pid for pid in s.raw_upto(t) if s.param_by_id[pid].tau_first == t]
    new_aux = [aid for aid in s.aux_upto(t) if s.aux_by_id[aid].stage == t]
    names = new_raw + new_aux
    n = len(names)
    if n == 0:
        return [dict()]
    if n > 6:
        raise SizeGuardError(f"{n} new coordinates at stage {t}")
    idx = {nm: j for j, nm in enumerate(names)}
    base_rows = []
    for r in problem.set_rows:
        if not r.applies_at(t):
            continue
        coefs: dict[int, float] = {}
        rhs = r.const
        for pid, c in r.xi:
            if pid in idx:
                coefs[idx[pid]] = coefs.get(idx[pid], 0.0) + c
            else:
                rhs -= c * (1.0 if pid == CONST else prefix[pid])
        for aid, c in r.zeta:
            if aid in idx:
                coefs[idx[aid]] = coefs.get(idx[aid], 0.0) + c
            else:
                rhs -= c * (1.0 if aid == CONST_AUX else prefix[aid])
        for vid, u in r.dec:
            rhs += u * coupler_vals[vid]
        if coefs:
            base_rows.append((coefs, rhs))
        elif rhs < -1e-7:
            return []  # slice empty under these couplers / prefix
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    spaces = {aid: s.lifted[aid] for aid in new_aux}
    out: list[dict[str, float]] = []
    seen = set()
    for cell in _segment_cells(spaces) if spaces else [dict()]:
        clo, chi = lo.copy(), hi.copy()
        for aid, k in cell.items():
            p = spaces[aid].grid
            clo[idx[aid]] = p[k]
            chi[idx[aid]] = p[k + 1]
        try:
            verts = _polytope_vertices(base_rows, n, clo, chi)
        except SizeGuardError:
            raise
        for v in verts:
            key = tuple(np.round(v, ROUND))
            if key in seen:
                continue
            seen.add(key)
            out.append({nm: float(v[idx[nm]]) for nm in names})
    return out


class _OracleNode:
    __slots__ = ("stage", "prefix", "class_key", "parent")

    def __init__(self, stage, prefix, class_key, parent):
        self.stage = stage
        self.prefix = prefix  # {param/aux id: value} for all coords of stages <= stage
        self.class_key = class_key  # observation history key at this stage
        self.parent = parent


def oracle_optimum(problem: ProblemSpec, max_policies: int = 5000,
                   time_limit: float | None = None) -> float:
    """Fully adjustable optimum over scenario trees branching at lifted-segment
    vertices, with exact decision-dependent nonanticipativity: a lower bound on
    the decision-rule optimum (minimization).

    Enumerates tabular assignments of the set-coupling binaries
    (materialization/observation triggers) per observation class for stages
    before the last decision stage; last-stage couplers stay in the extensive
    MILP with big-M-gated slice rows.
    """
    if not isinstance(problem.objective, WorstCaseObjective):
        raise ValueError("oracle supports the worst-case epigraph objective only")
    s = problem.structure()
    couplers: dict[int, list[str]] = {}
    for r in problem.set_rows:
        for vid, _ in r.dec:
            v = s.var_by_id[vid]
            if v.kind != BINARY:
                raise ValueError("oracle requires binary-only set dependence")
            couplers.setdefault(v.stage, []).append(vid)
    for t in couplers:
        couplers[t] = sorted(set(couplers[t]))
    T = problem.T
    t_dec = max((v.stage for v in problem.vars), default=1)
    if T > t_dec + 1:
        raise SizeGuardError("oracle supports at most one terminal row stage")
    if len(problem.aux) - 1 > 4 or T > 4:
        raise SizeGuardError("instance too large for the exhaustive oracle")

    terminal_couplers = couplers.get(t_dec, [])

    best = np.inf
    root = _OracleNode(1, {CONST: 1.0, CONST_AUX: 1.0}, (), None)
    count = [0]

    def assignments(var_ids):
        return [dict(zip(var_ids, bits)) for bits in itertools.product((0.0, 1.0), repeat=len(var_ids))]

    def recurse(t: int, nodes: list[_OracleNode], pol: dict[tuple[int, tuple], dict[str, float]]):
        nonlocal best
        if t > t_dec - 1:
            count[0] += 1
            if count[0] > max_policies:
                raise SizeGuardError("trigger-policy enumeration exceeded max_policies")
            val = _oracle_milp(problem, s, nodes, pol, terminal_couplers, t_dec, best)
            if val is not None:
                best = min(best, val)
            return
        stage_couplers = couplers.get(t, [])
        classes = sorted({n.class_key for n in nodes})
        per_class = assignments(stage_couplers) if stage_couplers else [dict()]
        for combo in itertools.product(per_class, repeat=len(classes)):
            by_class = dict(zip(classes, combo))
            pol2 = dict(pol)
            for ck, asg in by_class.items():
                pol2[(t, ck)] = asg
            children: list[_OracleNode] = []
            for node in nodes:
                cvals = _coupler_values(pol2, node)
                pts = _stage_slice_vertices(problem, s, t + 1, node.prefix, cvals)
                for pt in pts:
                    prefix = dict(node.prefix)
                    prefix.update(pt)
                    obs = node.class_key + tuple(
                        (aid, round(pt[aid], ROUND)) for aid in sorted(pt)
                        if aid in s.aux_by_id)
                    children.append(_OracleNode(t + 1, prefix, obs, node))
            recurse(t + 1, children, pol2)

    recurse(1, [root], {(1, ()): {}})
    if not np.isfinite(best):
        raise ValueError("oracle found no feasible policy")
    return float(best)


def _coupler_values(pol, node: _OracleNode) -> dict[str, float]:
    """All enumerated coupler values along this node's path."""
    out = {}
    cur = node
    while cur is not None:
        asg = pol.get((cur.stage, cur.class_key))
        if asg:
            out.update(asg)
        cur = cur.parent
    return out


def _oracle_milp(problem, s, nodes, pol, terminal_couplers, t_dec, cutoff) -> float | None:
    """Extensive-form MILP for one trigger policy: tabular decisions per
    observation class, stage rows per tree node, terminal-stage slice rows
    gated on the in-model terminal couplers."""
    from endoro.model import epigraph_var

    m = mip.MipModel()
    var_idx: dict[tuple[str, tuple], int] = {}
    # clamp for unbounded continuous decisions (generous, preserves desk-scale
    # optima) and the row-gating big-M computed against that clamp
    span, gate_m = _oracle_big_m(problem, s)

    def decision(vid: str, class_key: tuple) -> int:
        v = s.var_by_id[vid]
        key = (vid, class_key if v.stage > 1 else ())
        if key not in var_idx:
            lo = v.lo if np.isfinite(v.lo) else -span
            hi = v.hi if np.isfinite(v.hi) else span
            if v.kind == BINARY:
                lo, hi = 0.0, 1.0
            var_idx[key] = m.add_var(f"{vid}#{len(var_idx)}", lo, hi,
                                     integer=v.kind == BINARY)
        return var_idx[key]

    # class key per node per stage along the path
    def class_at(node: _OracleNode, stage: int) -> tuple:
        cur = node
        while cur.stage > stage:
            cur = cur.parent
        return cur.class_key

    enumerated = set()
    for (t, ck), asg in pol.items():
        enumerated.update(asg.keys())

    def add_stage_rows(node: _OracleNode, gate=None, gate_m=0.0):
        t = node.stage
        for c in problem.constraints:
            if c.stage != t:
                continue
            coefs: dict[int, float] = {}
            rhs = 0.0
            for pid, bc in c.rhs:
                rhs += bc * (1.0 if pid == CONST else node.prefix.get(pid, 0.0))
            for vid, a in c.terms:
                v = s.var_by_id[vid]
                ck = class_at(node, v.stage)
                if vid in enumerated:
                    cval = _coupler_values(pol, node).get(vid)
                    if cval is None:
                        cval = 0.0
                    rhs -= a * cval
                    continue
                j = decision(vid, ck)
                coefs[j] = coefs.get(j, 0.0) + a
            if gate is not None:
                for gj, on in gate:
                    # vacuous unless every gating binary matches its target
                    coefs[gj] = coefs.get(gj, 0.0) + (gate_m if on else -gate_m)
                    rhs += gate_m if on else 0.0
            m.add_row(f"n{t}", coefs, mip.LE, rhs)

    seen_rows = set()
    milp_nodes = list(nodes)
    for node in milp_nodes:
        cur = node
        chain = []
        while cur is not None:
            chain.append(cur)
            cur = cur.parent
        for nd in reversed(chain):
            key = (nd.stage, tuple(sorted((k, round(v, ROUND)) for k, v in nd.prefix.items())))
            if key in seen_rows:
                continue
            seen_rows.add(key)
            add_stage_rows(nd)

    # terminal stage: slices per assignment of the in-model terminal couplers
    for node in milp_nodes:
        if node.stage != t_dec:
            continue
        combos = itertools.product((0.0, 1.0), repeat=len(terminal_couplers))
        for bits in combos if terminal_couplers else [()]:
            cvals = _coupler_values(pol, node)
            cvals.update(dict(zip(terminal_couplers, bits)))
            pts = _stage_slice_vertices(problem, s, t_dec + 1, node.prefix, cvals) \
                if problem.T > t_dec else [dict()]
            gate = [(decision(vid, class_at(node, s.var_by_id[vid].stage)), bit == 1.0)
                    for vid, bit in zip(terminal_couplers, bits)]
            for pt in pts:
                prefix = dict(node.prefix)
                prefix.update(pt)
                child = _OracleNode(t_dec + 1, prefix, node.class_key, node) \
                    if problem.T > t_dec else node
                if problem.T > t_dec:
                    add_stage_rows(child, gate=gate or None, gate_m=gate_m)

    epi = epigraph_var(problem)
    m.obj = {decision(epi, ()): 1.0}
    try:
        sol = mip.solve_mip(m, cutoff=cutoff if np.isfinite(cutoff) else None)
    except mip.MipError:
        return None
    if sol.status == "optimal":
        return sol.objective
    return None


def _oracle_big_m(problem, s) -> tuple[float, float]:
    """(clamp for unbounded continuous decisions, row-gating big-M)."""

    def mass(bound_fallback):
        worst = 0.0
        for c in problem.constraints:
            row = 0.0
            for vid, a in c.terms:
                v = s.var_by_id[vid]
                fin = [abs(x) for x in (v.lo, v.hi) if np.isfinite(x)]
                b = max(fin) if np.isfinite(v.lo) and np.isfinite(v.hi) else bound_fallback
                row += abs(a) * max(b, 1.0)
            for pid, bc in c.rhs:
                p = s.param_by_id[pid]
                row += abs(bc) * max(abs(p.lo), abs(p.hi))
            worst = max(worst, row)
        return worst

    clamp = 2.0 * mass(1e6) + 1.0
    gate = 2.0 * mass(clamp) + 1.0
    return clamp, gate
