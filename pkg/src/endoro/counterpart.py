"""Robust counterpart generation.

assemble_compact merges constraint rows, variable-bound rows and the [0,1]
range rows for binary rules into per-stage compact rows whose left side is
linear in the decision-rule coefficients. dualize applies constraint-wise LP
duality over each stage's outer-approximation set (hull blocks per lifted
copy intersected with the W rows): per compact row it emits the raw-column
equalities, vertex inequalities over every lifted vertex, and the dual
objective row, registering dual-times-coefficient products as bilinear terms.
linearize splits {-1,0,1} coefficients into binary pairs and replaces
binary-times-continuous products by their exact envelopes; anything left
bilinear flags the model as export-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from endoro import mip
from endoro.lifting import all_vertices
from endoro.model import (
    BINARY,
    CONST,
    CONST_AUX,
    CONTINUOUS,
    ProblemSpec,
    ScenarioObjective,
    WorstCaseObjective,
    epigraph_var,
)
from endoro.policy import PolicySkeleton, DecisionRulePolicy, build_skeleton, lifted_coords


@dataclass
class CounterpartOptions:
    phi_max: float = 1e6  # bound for dual entries entering products
    coef_bound: float | None = None  # bound for continuous coefficients in products
    static: bool = False  # drop all recourse blocks (SRO variant)
    scenario_seed: int | None = None


@dataclass(frozen=True)
class CompactRow:
    name: str
    stage: int
    var_terms: tuple[tuple[str, float], ...]
    B: tuple[tuple[str, float], ...]

    @property
    def var_dict(self):
        return dict(self.var_terms)

    @property
    def B_dict(self):
        return dict(self.B)


@dataclass
class CompactForm:
    rows: list[CompactRow] = field(default_factory=list)

    def rows_at(self, t: int) -> list[CompactRow]:
        return [r for r in self.rows if r.stage == t]

    def P(self, t: int) -> int:
        return len(self.rows_at(t))

    @property
    def stages(self) -> list[int]:
        return sorted({r.stage for r in self.rows})


class StructuralError(ValueError):
    pass


def assemble_compact(problem: ProblemSpec, skeleton: PolicySkeleton) -> CompactForm:
    s = skeleton.struct
    form = CompactForm()
    for c in problem.constraints:
        for vid, _ in c.terms:
            if vid not in s.var_by_id:
                raise StructuralError(f"row {c.name}: unknown variable {vid}")
        form.rows.append(CompactRow(c.name, c.stage, c.terms, c.rhs))
    # robust bounds on continuous recourse
    for v in problem.vars:
        if v.kind != CONTINUOUS:
            continue
        if np.isfinite(v.hi):
            form.rows.append(CompactRow(f"ub[{v.id}]", v.stage,
                                        ((v.id, 1.0),), ((CONST, v.hi),)))
        if np.isfinite(v.lo):
            form.rows.append(CompactRow(f"lb[{v.id}]", v.stage,
                                        ((v.id, -1.0),), ((CONST, -v.lo),)))
    # [0,1] range rows for binary rules beyond the tightened single slot
    for v in problem.vars:
        if v.kind != BINARY:
            continue
        idxs = skeleton.slots_for(v.id)
        if len(idxs) == 1 and skeleton.slots[idxs[0]].lo == 0.0:
            continue
        form.rows.append(CompactRow(f"rng_ub[{v.id}]", v.stage, ((v.id, 1.0),), ((CONST, 1.0),)))
        form.rows.append(CompactRow(f"rng_lb[{v.id}]", v.stage, ((v.id, -1.0),), ((CONST, 0.0),)))
    return form


@dataclass
class RobustCounterpart:
    model: mip.MipModel
    skeleton: PolicySkeleton
    compact: CompactForm
    options: CounterpartOptions
    # objective products (slot, gate slot) -> coefficient, handled at linearize
    obj_quad: dict[tuple[int, int], float] = field(default_factory=dict)
    phi_index: dict[tuple[int, int, int], int] = field(default_factory=dict)
    psi_index: dict[tuple[int, int, str], int] = field(default_factory=dict)
    scenarios: list[dict[str, float]] | None = None
    weights: list[float] | None = None

    @property
    def n_slots(self) -> int:
        return self.skeleton.n_slots


def _slot_bounds(skeleton, options):
    b = options.coef_bound
    if b is not None:
        return b
    finite = [abs(x) for v in skeleton.problem.vars for x in (v.lo, v.hi) if np.isfinite(x)]
    return 10.0 * max(finite) if finite else 1e4


def dualize(problem: ProblemSpec, skeleton: PolicySkeleton, compact: CompactForm,
            options: CounterpartOptions | None = None) -> RobustCounterpart:
    options = options or CounterpartOptions()
    s = skeleton.struct
    model = mip.MipModel()
    # slot variables first: model var j == slot j
    for j, slot in enumerate(skeleton.slots):
        model.add_var(f"c[{slot.var_id},{slot.aux_id},{slot.comp}]",
                      slot.lo, slot.hi, integer=slot.integer)
    rc = RobustCounterpart(model=model, skeleton=skeleton, compact=compact,
                           options=options)

    vertex_cache = {aid: all_vertices(s.lifted[aid]) for aid in s.aux_order}

    for t in compact.stages:
        rows_t = compact.rows_at(t)
        set_rows = sorted((r for r in problem.set_rows if r.applies_at(t)),
                          key=lambda r: (r.stage, r.name))
        raws = s.raw_upto(t)
        auxs = s.aux_upto(t)
        for p, crow in enumerate(rows_t):
            if _is_deterministic(crow, skeleton):
                coefs: dict[int, float] = {}
                for vid, a in crow.var_terms:
                    for j in skeleton.slots_for(vid):
                        coefs[j] = coefs.get(j, 0.0) + a
                model.add_row(f"det[{t},{crow.name}]", coefs, mip.LE,
                              crow.B_dict.get(CONST, 0.0))
                continue
            _dualize_row(rc, problem, s, t, p, crow, set_rows, raws, auxs, vertex_cache)

    _build_objective(rc, problem)
    _apply_phi_bounds(rc)
    return rc


def _is_deterministic(crow: CompactRow, skeleton: PolicySkeleton) -> bool:
    for pid, c in crow.B:
        if pid != CONST and c != 0.0:
            return False
    for vid, _ in crow.var_terms:
        for j in skeleton.slots_for(vid):
            if skeleton.slots[j].aux_id != CONST_AUX:
                return False
    return True


def _dualize_row(rc, problem, s, t, p, crow, set_rows, raws, auxs, vertex_cache):
    model = rc.model
    Q = len(set_rows)
    phi = []
    for q in range(Q):
        j = model.add_var(f"phi[{t},{p},{q}]", 0.0, mip.INF)
        rc.phi_index[(t, p, q)] = j
        phi.append(j)
    psi = {}
    for aid in auxs:
        j = model.add_var(f"psi[{t},{p},{aid}]", -mip.INF, mip.INF)
        rc.psi_index[(t, p, aid)] = j
        psi[aid] = j

    # raw-column equalities: sum_q W[q,k] phi_q == -B[k]
    B = crow.B_dict
    for pid in raws:
        coefs = {}
        for q, srow in enumerate(set_rows):
            w = srow.xi_dict.get(pid, 0.0)
            if w != 0.0:
                coefs[phi[q]] = coefs.get(phi[q], 0.0) + w
        model.add_row(f"eq[{t},{p},{pid}]", coefs, mip.EQ, -B.get(pid, 0.0))

    # per-aux slot tables for this compact row and for the set rows
    var_terms = crow.var_dict
    lhs_slots: dict[str, list[tuple[int, float]]] = {}
    for vid, a in var_terms.items():
        for aid2, idxs in rc.skeleton.var_blocks(vid):
            lst = lhs_slots.setdefault(aid2, [])
            for j in idxs:
                lst.append((j, a))
    set_slots: dict[tuple[int, str], list[tuple[int, float]]] = {}
    for q, srow in enumerate(set_rows):
        for vid, u in srow.dec:
            if u == 0.0:
                continue
            for aid2, idxs in rc.skeleton.var_blocks(vid):
                lst = set_slots.setdefault((q, aid2), [])
                for j in idxs:
                    lst.append((j, u))

    # vertex inequalities per aux copy
    for aid in auxs:
        for vx in vertex_cache[aid]:
            coordval = np.concatenate([vx.v_bar, vx.v_hat])
            lin = {psi[aid]: 1.0}
            quad: dict[tuple[int, int], float] = {}
            for q, srow in enumerate(set_rows):
                wbar = srow.zeta_dict.get(aid, 0.0)
                if wbar != 0.0:
                    lin[phi[q]] = lin.get(phi[q], 0.0) + wbar * vx.v
                for j, u in set_slots.get((q, aid), ()):
                    cv = coordval[rc.skeleton.slots[j].comp]
                    if cv != 0.0:
                        key = (phi[q], j)
                        quad[key] = quad.get(key, 0.0) - u * cv
            for j, a in lhs_slots.get(aid, ()):
                cv = coordval[rc.skeleton.slots[j].comp]
                if cv != 0.0:
                    lin[j] = lin.get(j, 0.0) - a * cv
            name = f"vx[{t},{p},{aid},{vx.v:.6g},{sum(vx.v_hat):g}]"
            if quad:
                model.add_quad_row(name, lin, quad, mip.GE, 0.0)
            else:
                model.add_row(name, lin, mip.GE, 0.0)

    # dual objective row: sum_a psi + sum_q r_q phi_q <= 0
    coefs = {psi[aid]: 1.0 for aid in auxs}
    for q, srow in enumerate(set_rows):
        if srow.const != 0.0:
            coefs[phi[q]] = coefs.get(phi[q], 0.0) + srow.const
    rc.model.add_row(f"dob[{t},{p}]", coefs, mip.LE, 0.0)


def _gate_slot(rc, aid: str) -> int | None:
    """Slot of a copy's gate when it is a single tightened {0,1} coefficient."""
    s = rc.skeleton.struct
    a = s.aux_by_id[aid]
    if a.gate is None:
        return None
    idxs = rc.skeleton.slots_for(a.gate)
    if len(idxs) != 1 or rc.skeleton.slots[idxs[0]].lo != 0.0:
        raise StructuralError(
            f"scenario objective needs a here-and-now gate for {aid}; "
            f"{a.gate} has an adjustable rule")
    return idxs[0]


def _build_objective(rc: RobustCounterpart, problem: ProblemSpec) -> None:
    model = rc.model
    if isinstance(problem.objective, WorstCaseObjective):
        epi = epigraph_var(problem)
        for j in rc.skeleton.slots_for(epi, CONST_AUX):
            model.obj[j] = model.obj.get(j, 0.0) + 1.0
        return
    o: ScenarioObjective = problem.objective
    scen, weights = resolve_scenarios(problem, rc.options.scenario_seed)
    rc.scenarios, rc.weights = scen, weights
    s = rc.skeleton.struct
    for w, sc in zip(weights, scen):
        for vid, (c0, lin) in o.terms_dict.items():
            cv = c0 + sum(c * sc.get(pid, 0.0) for pid, c in lin.items())
            if cv == 0.0:
                continue
            for aid, idxs in rc.skeleton.var_blocks(vid):
                sp = s.lifted[aid]
                src = s.aux_by_id[aid].source
                val = 1.0 if aid == CONST_AUX else sc.get(src, 0.0)
                from endoro.lifting import lift_value

                vb, vh = lift_value(sp, val)
                coords = np.concatenate([vb, vh])
                gate = None if aid == CONST_AUX else _gate_slot(rc, aid)
                for j in idxs:
                    coordv = coords[rc.skeleton.slots[j].comp]
                    if coordv == 0.0:
                        continue
                    if gate is None:
                        model.obj[j] = model.obj.get(j, 0.0) + w * cv * coordv
                    else:
                        key = (j, gate)
                        rc.obj_quad[key] = rc.obj_quad.get(key, 0.0) + w * cv * coordv


def resolve_scenarios(problem: ProblemSpec, seed_override=None):
    o = problem.objective
    if not isinstance(o, ScenarioObjective):
        raise ValueError("not a scenario objective")
    if o.scenarios is not None:
        scen = [dict(sc) for sc in o.scenarios]
    else:
        from endoro.verify import sample_scenarios

        seed = o.seed if seed_override is None else seed_override
        scen = [sc.values for sc in sample_scenarios(problem, seed, o.n)]
    if o.weights is not None:
        weights = list(o.weights)
    else:
        weights = [1.0 / len(scen)] * len(scen)
    if len(weights) != len(scen):
        raise ValueError("scenario/weight length mismatch")
    return scen, weights


def _apply_phi_bounds(rc: RobustCounterpart) -> None:
    """Dual entries that enter products need finite upper bounds."""
    seen = set()
    for _, _, quad, _, _ in rc.model.quad_rows:
        for (i, _j) in quad:
            seen.add(i)
    for i in seen:
        rc.model.var_hi[i] = min(rc.model.var_hi[i], rc.options.phi_max)


# ---------------------------------------------------------------------------
# Linearization
# ---------------------------------------------------------------------------

class _ProductTable:
    def __init__(self, model: mip.MipModel, skeleton: PolicySkeleton):
        self.model = model
        self.skeleton = skeleton
        self.splits: dict[int, tuple[int, int]] = {}
        self.products: dict[tuple[int, int], int] = {}
        self.left_bilinear: list[tuple[int, int]] = []

    def split(self, j: int) -> tuple[int, int]:
        if j not in self.splits:
            m = self.model
            pj = m.add_var(f"{m.var_names[j]}+", 0.0, 1.0, integer=True)
            mj = m.add_var(f"{m.var_names[j]}-", 0.0, 1.0, integer=True)
            m.add_row(f"split[{j}]", {j: 1.0, pj: -1.0, mj: 1.0}, mip.EQ, 0.0)
            m.add_row(f"split1[{j}]", {pj: 1.0, mj: 1.0}, mip.LE, 1.0)
            self.splits[j] = (pj, mj)
        return self.splits[j]

    def _envelope(self, cont: int, binv: int) -> int:
        key = (cont, binv)
        if key in self.products:
            return self.products[key]
        m = self.model
        f, F = m.var_lo[cont], m.var_hi[cont]
        if not (np.isfinite(f) and np.isfinite(F)):
            raise mip.MipError(
                f"unbounded continuous factor {m.var_names[cont]} in a product")
        w = m.add_var(f"w[{m.var_names[cont]}*{m.var_names[binv]}]",
                      min(f, 0.0), max(F, 0.0))
        m.add_row(f"mc1[{cont},{binv}]", {w: 1.0, binv: -F}, mip.LE, 0.0)
        m.add_row(f"mc2[{cont},{binv}]", {w: 1.0, binv: -f}, mip.GE, 0.0)
        m.add_row(f"mc3[{cont},{binv}]", {w: 1.0, cont: -1.0, binv: -f}, mip.LE, -f)
        m.add_row(f"mc4[{cont},{binv}]", {w: 1.0, cont: -1.0, binv: -F}, mip.GE, -F)
        self.products[key] = w
        return w

    def expand(self, i: int, j: int) -> list[tuple[int, float]]:
        """Rewrite factor pair (i, j) as +-1-weighted envelope variables, or
        record it as irreducibly bilinear (continuous x continuous)."""
        m = self.model

        def kind(k):
            if m.var_int[k]:
                if m.var_lo[k] >= 0.0 and m.var_hi[k] <= 1.0:
                    return "bin"
                if m.var_lo[k] >= -1.0 and m.var_hi[k] <= 1.0:
                    return "tri"
            return "cont"

        ki, kj = kind(i), kind(j)
        if ki == "bin" and kj != "bin":
            i, j = j, i
            ki, kj = kj, ki
        if kj == "bin":
            if ki == "tri":
                pj, mj = self.split(i)
                return [(self._envelope_bin(pj, j), 1.0), (self._envelope_bin(mj, j), -1.0)]
            if ki == "bin":
                return [(self._envelope_bin(i, j), 1.0)]
            return [(self._envelope(i, j), 1.0)]
        if kj == "tri" and ki == "cont":
            pj, mj = self.split(j)
            return [(self._envelope(i, pj), 1.0), (self._envelope(i, mj), -1.0)]
        if ki == "tri" and kj == "cont":
            return self.expand(j, i)
        self.left_bilinear.append((i, j))
        return []

    def _envelope_bin(self, a: int, b: int) -> int:
        """Exact product of two binaries (envelope with bounds [0,1])."""
        return self._envelope(a, b)


def linearize(rc: RobustCounterpart) -> mip.MipModel:
    """Replace every registered bilinear term; returns the same model object,
    now linear unless continuous set-dependence remains (then quad rows stay
    and the model must be exported)."""
    model = rc.model
    table = _ProductTable(model, rc.skeleton)
    remaining = []
    for name, lin, quad, sense, rhs in model.quad_rows:
        coefs = dict(lin)
        left = {}
        for (i, j), c in quad.items():
            parts = table.expand(i, j)
            if not parts:
                left[(i, j)] = c
                continue
            for w, sgn in parts:
                coefs[w] = coefs.get(w, 0.0) + sgn * c
        if left:
            remaining.append((name, coefs, left, sense, rhs))
        else:
            model.add_row(name, coefs, sense, rhs)
    model.quad_rows = remaining
    for (j, g), c in rc.obj_quad.items():
        for w, sgn in table.expand(j, g):
            model.obj[w] = model.obj.get(w, 0.0) + sgn * c
    rc.obj_quad = {}
    return model


def apply_coefficient_zeroing(rc: RobustCounterpart, triples) -> None:
    """Rows -M z <= coef <= M z on the underlying model, z via its single slot."""
    m = rc.model
    for slot, z_var, bound in triples:
        zidx = rc.skeleton.slots_for(z_var)
        if len(zidx) != 1:
            raise StructuralError(f"gate {z_var} must be a single here-and-now slot")
        z = zidx[0]
        m.add_row(f"cz_ub[{slot}]", {slot: 1.0, z: -bound}, mip.LE, 0.0)
        m.add_row(f"cz_lb[{slot}]", {slot: -1.0, z: -bound}, mip.LE, 0.0)
        m.var_lo[slot] = max(m.var_lo[slot], -bound)
        m.var_hi[slot] = min(m.var_hi[slot], bound)


def build_counterpart_mip(problem: ProblemSpec, options: CounterpartOptions | None = None,
                          coef_zero: dict[tuple[str, str], str] | None = None,
                          m_coef: float | None = None):
    """Full pipeline: skeleton, compact form, dual, products, objective.

    Returns (model, rc); model var j < skeleton.n_slots is coefficient slot j.
    """
    options = options or CounterpartOptions()
    skeleton = build_skeleton(problem, static=options.static)
    # continuous slots entering products need finite bounds before dualization
    bound = _slot_bounds(skeleton, options)
    compact = assemble_compact(problem, skeleton)
    rc = dualize(problem, skeleton, compact, options)
    for j, slot in enumerate(skeleton.slots):
        if not slot.integer and _slot_in_products(rc, j):
            rc.model.var_lo[j] = max(rc.model.var_lo[j], -bound)
            rc.model.var_hi[j] = min(rc.model.var_hi[j], bound)
    if coef_zero:
        from endoro.nonanticipativity import coefficient_zeroing_rows

        mc = m_coef if m_coef is not None else bound
        apply_coefficient_zeroing(rc, coefficient_zeroing_rows(skeleton, coef_zero, mc))
    linearize(rc)
    return rc.model, rc


def _slot_in_products(rc: RobustCounterpart, j: int) -> bool:
    for _, _, quad, _, _ in rc.model.quad_rows:
        for (a, b) in quad:
            if a == j or b == j:
                return True
    for (a, b) in rc.obj_quad:
        if a == j or b == j:
            return True
    return False


def extract_policy(rc: RobustCounterpart, solution: mip.MipSolution) -> DecisionRulePolicy:
    if solution.x is None:
        raise ValueError(f"no incumbent to extract (status {solution.status})")
    values = np.array(solution.x[: rc.skeleton.n_slots], dtype=float)
    for j, slot in enumerate(rc.skeleton.slots):
        if slot.integer:
            values[j] = round(values[j])
    return DecisionRulePolicy(rc.skeleton, values)
