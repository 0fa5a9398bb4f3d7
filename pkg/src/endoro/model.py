"""Declarative multistage robust problems with endogenous uncertainty.

A :class:`ProblemSpec` lists stages, uncertain parameters (with materialization
and observation windows), decision variables (continuous/binary recourse plus
binary materialization and observation triggers), constraint rows, polyhedral
uncertainty-set rows whose right-hand side may depend on earlier-stage
decisions, auxiliary observation copies, and the objective mode.

Conventions: a reserved constant parameter CONST ("_one") sits at stage 1 with
value 1; its ungated auxiliary copy CONST_AUX carries the constant decision-
rule blocks. Constants in affine expressions are coefficients on CONST.
Stage-t uncertainty sets are the rows with stage <= t <= last_stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from endoro import mip
from endoro.lifting import LiftedSpace

CONST = "_one"
CONST_AUX = "_one@1"

CONTINUOUS = "continuous"
BINARY = "binary"

ROLE_XC = "xc"
ROLE_XB = "xb"
ROLE_Y = "y"
ROLE_Z = "z"


@dataclass(frozen=True)
class ParamDescriptor:
    """Uncertain parameter with materialization window [tau_first, tau_last]
    and observation window [obs_first, obs_last] (empty window = never
    observable)."""

    id: str
    tau_first: int
    tau_last: int
    obs_first: int
    obs_last: int
    lo: float
    hi: float
    breakpoints: tuple[float, ...] = ()


@dataclass(frozen=True)
class VariableDescriptor:
    id: str
    stage: int
    kind: str  # continuous | binary
    role: str = ROLE_XC  # xc | xb | y | z
    lo: float = 0.0
    hi: float = mip.INF
    param: str | None = None  # for y/z roles: the gated parameter


@dataclass(frozen=True)
class ConstraintRow:
    """sum(terms[v] * v) <= sum(rhs[p] * xi_p), robust over the stage set."""

    name: str
    stage: int
    terms: tuple[tuple[str, float], ...]
    rhs: tuple[tuple[str, float], ...] = ()

    @staticmethod
    def make(name, stage, terms: dict[str, float], rhs: dict[str, float] | None = None):
        return ConstraintRow(name, stage, _freeze(terms), _freeze(rhs or {}))

    @property
    def terms_dict(self) -> dict[str, float]:
        return dict(self.terms)

    @property
    def rhs_dict(self) -> dict[str, float]:
        return dict(self.rhs)


@dataclass(frozen=True)
class SetRow:
    """sum(xi)*xi + sum(zeta)*zeta <= sum(dec)*var + const.

    Applies to every stage t with stage <= t <= last_stage (cumulative sets).
    Decision coefficients may only reference stages strictly before `stage`.
    """

    name: str
    stage: int
    xi: tuple[tuple[str, float], ...] = ()
    zeta: tuple[tuple[str, float], ...] = ()
    dec: tuple[tuple[str, float], ...] = ()
    const: float = 0.0
    last_stage: int | None = None

    @staticmethod
    def make(name, stage, xi=None, zeta=None, dec=None, const=0.0, last_stage=None):
        return SetRow(name, stage, _freeze(xi or {}), _freeze(zeta or {}), _freeze(dec or {}),
                      const, last_stage)

    @property
    def xi_dict(self):
        return dict(self.xi)

    @property
    def zeta_dict(self):
        return dict(self.zeta)

    @property
    def dec_dict(self):
        return dict(self.dec)

    def applies_at(self, t: int) -> bool:
        last = self.last_stage if self.last_stage is not None else 10**9
        return self.stage <= t <= last


@dataclass(frozen=True)
class AuxParam:
    """Auxiliary observation copy: equals the source parameter when the gate
    variable is 1 (or unconditionally when gate is None), zero otherwise."""

    id: str
    stage: int
    source: str
    gate: str | None = None
    big_m: float | None = None


def _freeze(d: dict[str, float]) -> tuple[tuple[str, float], ...]:
    return tuple(sorted(d.items()))


@dataclass(frozen=True)
class WorstCaseObjective:
    mode: str = "worst_case"
    epigraph: str | None = None  # default: first stage-1 continuous variable


@dataclass(frozen=True)
class ScenarioObjective:
    """sum_s phi_s * sum_v (c0_v + sum_p c_vp * xi_p(s)) * v(s)."""

    terms: tuple[tuple[str, tuple[float, tuple[tuple[str, float], ...]]], ...]
    seed: int = 0
    n: int = 0
    scenarios: tuple[tuple[tuple[str, float], ...], ...] | None = None
    weights: tuple[float, ...] | None = None
    mode: str = "scenario"

    @staticmethod
    def make(terms: dict[str, tuple[float, dict[str, float]]], seed=0, n=0,
             scenarios=None, weights=None):
        frozen = tuple(sorted((v, (c0, _freeze(lin))) for v, (c0, lin) in terms.items()))
        scen = None
        if scenarios is not None:
            scen = tuple(_freeze(s) for s in scenarios)
        w = tuple(weights) if weights is not None else None
        return ScenarioObjective(terms=frozen, seed=seed, n=n, scenarios=scen, weights=w)

    @property
    def terms_dict(self):
        return {v: (c0, dict(lin)) for v, (c0, lin) in self.terms}


@dataclass
class ProblemSpec:
    T: int
    params: list[ParamDescriptor] = field(default_factory=list)
    vars: list[VariableDescriptor] = field(default_factory=list)
    constraints: list[ConstraintRow] = field(default_factory=list)
    set_rows: list[SetRow] = field(default_factory=list)
    aux: list[AuxParam] = field(default_factory=list)
    # optional per-variable restriction of which aux copies its rule may use
    visibility: dict[str, tuple[str, ...]] = field(default_factory=dict)
    objective: WorstCaseObjective | ScenarioObjective = field(default_factory=WorstCaseObjective)

    def structure(self) -> "Structure":
        return Structure(self)


def new_problem(T: int) -> ProblemSpec:
    """Empty problem seeded with the stage-1 constant parameter, its copy, and
    the rows pinning both to 1."""
    p = ProblemSpec(T=T)
    p.params.append(ParamDescriptor(CONST, 1, 1, 1, 1, 1.0, 1.0))
    p.aux.append(AuxParam(CONST_AUX, 1, CONST, None))
    p.set_rows.append(SetRow.make("const_ub", 1, xi={CONST: 1.0}, const=1.0))
    p.set_rows.append(SetRow.make("const_lb", 1, xi={CONST: -1.0}, const=-1.0))
    p.set_rows.append(SetRow.make("const_copy+", 1, xi={CONST: -1.0}, zeta={CONST_AUX: 1.0}))
    p.set_rows.append(SetRow.make("const_copy-", 1, xi={CONST: 1.0}, zeta={CONST_AUX: -1.0}))
    return p


class Structure:
    """Derived index structure shared by the lifting/policy/counterpart layers."""

    def __init__(self, problem: ProblemSpec):
        self.problem = problem
        self.param_by_id = {p.id: p for p in problem.params}
        self.var_by_id = {v.id: v for v in problem.vars}
        self.aux_by_id = {a.id: a for a in problem.aux}
        # deterministic coordinate orders
        self.param_order = [p.id for p in sorted(problem.params, key=lambda p: (p.tau_first, p.id != CONST, p.id))]
        self.aux_order = [a.id for a in sorted(problem.aux, key=lambda a: (a.stage, a.id != CONST_AUX, a.id))]
        self.lifted: dict[str, LiftedSpace] = {}
        for a in problem.aux:
            src = self.param_by_id[a.source]
            lo = src.lo if a.gate is None else min(0.0, src.lo)
            self.lifted[a.id] = LiftedSpace(lo, src.hi, tuple(src.breakpoints))
        # trigger maps: param -> {stage of trigger var: var id}
        self.y_triggers: dict[str, dict[int, str]] = {}
        self.z_triggers: dict[str, dict[int, str]] = {}
        for v in problem.vars:
            if v.role == ROLE_Y and v.param is not None:
                self.y_triggers.setdefault(v.param, {})[v.stage] = v.id
            if v.role == ROLE_Z and v.param is not None:
                self.z_triggers.setdefault(v.param, {})[v.stage] = v.id

    def raw_upto(self, t: int) -> list[str]:
        return [pid for pid in self.param_order if self.param_by_id[pid].tau_first <= t]

    def aux_upto(self, t: int) -> list[str]:
        return [aid for aid in self.aux_order if self.aux_by_id[aid].stage <= t]

    def visible_aux(self, var_id: str) -> list[str]:
        v = self.var_by_id[var_id]
        allowed = self.problem.visibility.get(var_id)
        out = []
        for aid in self.aux_order:
            if self.aux_by_id[aid].stage > v.stage:
                continue
            if allowed is not None and aid != CONST_AUX and aid not in allowed:
                continue
            out.append(aid)
        return out

    def is_gated(self, pid: str) -> bool:
        return pid in self.y_triggers


# ---------------------------------------------------------------------------
# Window constraints (materialize / observe / materialize-then-observe)
# ---------------------------------------------------------------------------

def window_constraints(problem: ProblemSpec) -> list[ConstraintRow]:
    """Rows restricting trigger variables to their windows: at most one
    materialization, at most one observation, and observation only after
    materialization. Idempotent and deterministic."""
    s = problem.structure()
    rows: list[ConstraintRow] = []
    for pid in s.param_order:
        p = s.param_by_id[pid]
        ys = s.y_triggers.get(pid, {})
        zs = s.z_triggers.get(pid, {})
        if ys:
            terms = {ys[t]: 1.0 for t in sorted(ys)}
            rows.append(ConstraintRow.make(f"win_y[{pid}]", max(ys), terms, {CONST: 1.0}))
        if zs:
            terms = {zs[t]: 1.0 for t in sorted(zs)}
            rows.append(ConstraintRow.make(f"win_z[{pid}]", max(zs), terms, {CONST: 1.0}))
        for tz in sorted(zs):
            z_var = zs[tz]
            if not ys:
                continue  # exogenous materialization: observation always legal
            if z_var in ys.values():
                continue  # shared trigger (y == z): row is vacuous
            # observation decided at tz reveals at tz+1; materialization must
            # have been triggered at some stage <= tz
            terms = {ys[ty]: -1.0 for ty in sorted(ys) if ty <= tz}
            terms[z_var] = terms.get(z_var, 0.0) + 1.0
            rows.append(ConstraintRow.make(f"win_yz[{pid},{tz}]", tz, terms, {}))
    return rows


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    def add(self, msg: str):
        self.violations.append(msg)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __iter__(self):
        return iter(self.violations)


def validate(problem: ProblemSpec, check_boundedness: bool = True) -> ValidationReport:
    """Structural validation; an empty report means the spec is accepted."""
    rep = ValidationReport()
    ids = [p.id for p in problem.params]
    if CONST not in ids:
        rep.add("missing stage-1 constant parameter convention (xi_11 = 1)")
        return rep
    if len(set(ids)) != len(ids):
        rep.add("duplicate parameter ids")
    s = problem.structure()

    for p in problem.params:
        if p.id == CONST:
            continue
        if not (np.isfinite(p.lo) and np.isfinite(p.hi) and p.lo < p.hi):
            rep.add(f"{p.id}: bounds must be finite with lo < hi")
        if not (1 <= p.tau_first <= p.tau_last <= problem.T):
            rep.add(f"{p.id}: bad materialization window [{p.tau_first}, {p.tau_last}]")
        if p.obs_first <= p.obs_last:  # nonempty observation window
            if p.obs_first < p.tau_first or p.obs_last < p.tau_last:
                rep.add(f"{p.id}: observation precedes materialization")
            if p.obs_last > problem.T:
                rep.add(f"{p.id}: observation window exceeds horizon")
        bps = list(p.breakpoints)
        if bps != sorted(bps) or len(set(bps)) != len(bps):
            rep.add(f"{p.id}: breakpoints not strictly increasing")
        elif bps and (bps[0] <= p.lo or bps[-1] >= p.hi):
            rep.add(f"{p.id}: breakpoints must lie strictly inside (lo, hi)")

    for v in problem.vars:
        if not (1 <= v.stage <= problem.T):
            rep.add(f"{v.id}: stage out of range")
        if v.role in (ROLE_Y, ROLE_Z):
            if v.kind != BINARY:
                rep.add(f"{v.id}: trigger variables must be binary")
            if v.param is None or v.param not in s.param_by_id:
                rep.add(f"{v.id}: trigger must reference a declared parameter")
            else:
                p = s.param_by_id[v.param]
                w = (p.tau_first, p.tau_last) if v.role == ROLE_Y else (p.obs_first, p.obs_last)
                if not (w[0] <= v.stage + 1 <= w[1]):
                    rep.add(f"{v.id}: trigger stage {v.stage} gates stage {v.stage + 1}, "
                            f"outside window {w}")

    for a in problem.aux:
        if a.source not in s.param_by_id:
            rep.add(f"aux {a.id}: unknown source {a.source}")
            continue
        if a.gate is not None and a.gate not in s.var_by_id:
            rep.add(f"aux {a.id}: unknown gate variable {a.gate}")
        elif a.gate is not None and s.var_by_id[a.gate].stage >= a.stage:
            rep.add(f"aux {a.id}: gate must be decided strictly before stage {a.stage}")
        if s.param_by_id[a.source].tau_first > a.stage:
            rep.add(f"aux {a.id}: source materializes after the copy's stage")

    for c in problem.constraints:
        for vid, _ in c.terms:
            if vid not in s.var_by_id:
                rep.add(f"row {c.name}: unknown variable {vid}")
            elif s.var_by_id[vid].stage > c.stage:
                rep.add(f"row {c.name}: references stage-{s.var_by_id[vid].stage} variable "
                        f"{vid} at stage {c.stage} (causality)")
        for pid, _ in c.rhs:
            if pid not in s.param_by_id:
                rep.add(f"row {c.name}: unknown parameter {pid}")
            elif s.param_by_id[pid].tau_first > c.stage:
                rep.add(f"row {c.name}: rhs references later-stage parameter {pid}")

    for r in problem.set_rows:
        for pid, _ in r.xi:
            if pid not in s.param_by_id:
                rep.add(f"set row {r.name}: unknown parameter {pid}")
            elif s.param_by_id[pid].tau_first > r.stage:
                rep.add(f"set row {r.name}: parameter {pid} enters after stage {r.stage}")
        for aid, _ in r.zeta:
            if aid not in s.aux_by_id:
                rep.add(f"set row {r.name}: unknown aux {aid}")
            elif s.aux_by_id[aid].stage > r.stage:
                rep.add(f"set row {r.name}: aux {aid} enters after stage {r.stage}")
        for vid, _ in r.dec:
            if vid not in s.var_by_id:
                rep.add(f"set row {r.name}: unknown variable {vid}")
            elif s.var_by_id[vid].stage >= r.stage:
                rep.add(f"set row {r.name}: same- or later-stage decision {vid} "
                        f"in a stage-{r.stage} set row")

    # window rows must be present among the constraints
    want = window_constraints(problem)
    have = {(c.stage, c.terms, c.rhs) for c in problem.constraints}
    for w in want:
        if (w.stage, w.terms, w.rhs) not in have:
            rep.add(f"missing window constraint {w.name}")

    if isinstance(problem.objective, ScenarioObjective):
        o = problem.objective
        if o.scenarios is None and o.n <= 0:
            rep.add("scenario objective without scenarios")
        if o.weights is not None and abs(sum(o.weights) - 1.0) > 1e-9:
            rep.add("scenario weights must sum to 1 within 1e-9")
        for vid, _ in o.terms:
            if vid not in s.var_by_id:
                rep.add(f"objective: unknown variable {vid}")
    else:
        epi = problem.objective.epigraph
        if epi is not None and epi not in s.var_by_id:
            rep.add(f"objective: unknown epigraph variable {epi}")
        else:
            cand = epi or _default_epigraph(problem)
            if cand is None:
                rep.add("worst-case objective needs a stage-1 continuous variable")

    if check_boundedness and rep.ok:
        _check_bounded(problem, s, rep)
    return rep


def _default_epigraph(problem: ProblemSpec) -> str | None:
    for v in problem.vars:
        if v.stage == 1 and v.kind == CONTINUOUS:
            return v.id
    return None


def epigraph_var(problem: ProblemSpec) -> str:
    if isinstance(problem.objective, WorstCaseObjective) and problem.objective.epigraph:
        return problem.objective.epigraph
    v = _default_epigraph(problem)
    if v is None:
        raise ValueError("no stage-1 continuous variable for the epigraph objective")
    return v


def _check_bounded(problem: ProblemSpec, s: Structure, rep: ValidationReport) -> None:
    """Per-coordinate max/min LPs over each stage set, decisions free in their
    declared bounds; any unbounded direction is a violation."""
    for t in range(1, problem.T + 1):
        rows = [r for r in problem.set_rows if r.applies_at(t)]
        coords = [("xi", pid) for pid in s.raw_upto(t)] + [("zeta", aid) for aid in s.aux_upto(t)]
        if not coords:
            continue
        m = mip.MipModel()
        idx = {}
        for kind, cid in coords:
            idx[(kind, cid)] = m.add_var(f"{kind}:{cid}", -mip.INF, mip.INF)
        dec_idx = {}
        for r in rows:
            for vid, _ in r.dec:
                if vid not in dec_idx:
                    v = s.var_by_id[vid]
                    dec_idx[vid] = m.add_var(f"dec:{vid}", v.lo, v.hi)
        for r in rows:
            coefs: dict[int, float] = {}
            for pid, c in r.xi:
                coefs[idx[("xi", pid)]] = coefs.get(idx[("xi", pid)], 0.0) + c
            for aid, c in r.zeta:
                coefs[idx[("zeta", aid)]] = coefs.get(idx[("zeta", aid)], 0.0) + c
            for vid, c in r.dec:
                coefs[dec_idx[vid]] = coefs.get(dec_idx[vid], 0.0) - c
            m.add_row(r.name, coefs, mip.LE, r.const)
        for kind, cid in coords:
            for sign in (1.0, -1.0):
                m.obj = {idx[(kind, cid)]: sign}
                sol = mip.solve_lp(m)
                if sol.status == "unbounded":
                    rep.add(f"unbounded stage set: stage {t}, coordinate {cid}, "
                            f"direction {'-' if sign > 0 else '+'}")
                    break
                if sol.status == "infeasible":
                    rep.add(f"empty stage set at stage {t}")
                    return


# ---------------------------------------------------------------------------
# JSON interchange (reals as decimal strings, bit-exact round trip)
# ---------------------------------------------------------------------------

def _enc(x: float) -> str:
    return repr(float(x))


def _dec(sv) -> float:
    return float(sv)


def _enc_map(pairs) -> dict:
    return {k: _enc(v) for k, v in pairs}


def _dec_map(d) -> dict[str, float]:
    return {k: _dec(v) for k, v in d.items()}


def to_json(problem: ProblemSpec) -> str:
    doc: dict = {"stages": problem.T}
    doc["params"] = [
        {"id": p.id, "tau_first": p.tau_first, "tau_last": p.tau_last,
         "obs_first": p.obs_first, "obs_last": p.obs_last,
         "lo": _enc(p.lo), "hi": _enc(p.hi), "breakpoints": [_enc(b) for b in p.breakpoints]}
        for p in problem.params
    ]
    doc["vars"] = [
        {"id": v.id, "stage": v.stage, "kind": v.kind, "role": v.role,
         "lo": _enc(v.lo), "hi": _enc(v.hi), "param": v.param}
        for v in problem.vars
    ]
    doc["constraints"] = [
        {"name": c.name, "stage": c.stage, "terms": _enc_map(c.terms), "rhs": _enc_map(c.rhs)}
        for c in problem.constraints
    ]
    doc["set_rows"] = [
        {"name": r.name, "stage": r.stage, "last_stage": r.last_stage,
         "xi": _enc_map(r.xi), "zeta": _enc_map(r.zeta), "dec": _enc_map(r.dec),
         "const": _enc(r.const)}
        for r in problem.set_rows
    ]
    doc["aux"] = [
        {"id": a.id, "stage": a.stage, "source": a.source, "gate": a.gate,
         "big_m": None if a.big_m is None else _enc(a.big_m)}
        for a in problem.aux
    ]
    doc["visibility"] = {k: list(v) for k, v in problem.visibility.items()}
    o = problem.objective
    if isinstance(o, WorstCaseObjective):
        doc["objective"] = {"mode": "worst_case", "epigraph": o.epigraph}
    else:
        doc["objective"] = {
            "mode": "scenario",
            "terms": {v: {"const": _enc(c0), "lin": _enc_map(lin)} for v, (c0, lin) in o.terms},
            "seed": o.seed,
            "n": o.n,
            "scenarios": None if o.scenarios is None else [_enc_map(s) for s in o.scenarios],
            "weights": None if o.weights is None else [_enc(w) for w in o.weights],
        }
    return json.dumps(doc, indent=1, sort_keys=True)


def from_json(text: str) -> ProblemSpec:
    doc = json.loads(text)
    p = ProblemSpec(T=doc["stages"])
    for d in doc["params"]:
        p.params.append(ParamDescriptor(
            d["id"], d["tau_first"], d["tau_last"], d["obs_first"], d["obs_last"],
            _dec(d["lo"]), _dec(d["hi"]), tuple(_dec(b) for b in d["breakpoints"])))
    for d in doc["vars"]:
        p.vars.append(VariableDescriptor(
            d["id"], d["stage"], d["kind"], d["role"], _dec(d["lo"]), _dec(d["hi"]), d["param"]))
    for d in doc["constraints"]:
        p.constraints.append(ConstraintRow.make(d["name"], d["stage"],
                                                _dec_map(d["terms"]), _dec_map(d["rhs"])))
    for d in doc["set_rows"]:
        p.set_rows.append(SetRow.make(d["name"], d["stage"], _dec_map(d["xi"]),
                                      _dec_map(d["zeta"]), _dec_map(d["dec"]),
                                      _dec(d["const"]), d["last_stage"]))
    for d in doc["aux"]:
        p.aux.append(AuxParam(d["id"], d["stage"], d["source"], d["gate"],
                              None if d["big_m"] is None else _dec(d["big_m"])))
    p.visibility = {k: tuple(v) for k, v in doc["visibility"].items()}
    o = doc["objective"]
    if o["mode"] == "worst_case":
        p.objective = WorstCaseObjective(epigraph=o["epigraph"])
    else:
        terms = {v: (_dec(d["const"]), _dec_map(d["lin"])) for v, d in o["terms"].items()}
        p.objective = ScenarioObjective.make(
            terms, seed=o["seed"], n=o["n"],
            scenarios=None if o["scenarios"] is None else [_dec_map(s) for s in o["scenarios"]],
            weights=None if o["weights"] is None else [_dec(w) for w in o["weights"]])
    return p
