"""Decision-dependent nonanticipativity.

Two mechanisms: auxiliary observation copies (an extra uncertain coordinate per
(stage, parameter) that equals the source when its gate is 1 and zero
otherwise, coupled by big-M rows) and, for first-stage-only observation
decisions, coefficient zeroing of decision-rule blocks against a fixed set.
"""

from __future__ import annotations

from endoro.model import (
    CONST_AUX,
    AuxParam,
    ProblemSpec,
    SetRow,
    Structure,
)


def aux_id(stage: int, source: str, tag: str = "") -> str:
    return f"{source}@{stage}{tag}"


def standard_aux(problem: ProblemSpec) -> list[AuxParam]:
    """One copy per (stage in the observation window + 1, parameter), gated by
    the declared observation trigger of the preceding stage."""
    s = problem.structure()
    out: list[AuxParam] = []
    for pid in s.param_order:
        for tz, z_var in sorted(s.z_triggers.get(pid, {}).items()):
            out.append(AuxParam(aux_id(tz + 1, pid), tz + 1, pid, z_var))
    return out


def big_m_for(problem: ProblemSpec, a: AuxParam) -> float:
    if a.big_m is not None:
        return a.big_m
    s = problem.structure()
    return max(0.0, -s.param_by_id[a.source].lo)


def materialization_rows(problem: ProblemSpec) -> list[SetRow]:
    """xi_min * sum(y) <= xi <= xi_max * sum(y) over the materialization
    window, with stage-t partial sums while the window is open."""
    s = problem.structure()
    rows: list[SetRow] = []
    for pid in s.param_order:
        ys = s.y_triggers.get(pid, {})
        if not ys:
            continue
        p = s.param_by_id[pid]
        for t in range(p.tau_first, p.tau_last + 1):
            dec_u = {}
            dec_l = {}
            for ty in sorted(ys):
                if ty + 1 <= t:
                    dec_u[ys[ty]] = dec_u.get(ys[ty], 0.0) + p.hi
                    dec_l[ys[ty]] = dec_l.get(ys[ty], 0.0) - p.lo
            last = t if t < p.tau_last else None
            rows.append(SetRow.make(f"mat_ub[{pid},{t}]", t, xi={pid: 1.0},
                                    dec=dec_u, last_stage=last))
            rows.append(SetRow.make(f"mat_lb[{pid},{t}]", t, xi={pid: -1.0},
                                    dec=dec_l, last_stage=last))
    return rows


def observation_rows(problem: ProblemSpec) -> list[SetRow]:
    """Coupling rows forcing each copy to equal its source when the gate is 1
    and zero otherwise; ungated copies are hard equalities."""
    s = problem.structure()
    rows: list[SetRow] = []
    for aid in s.aux_order:
        a = s.aux_by_id[aid]
        if aid == CONST_AUX:
            continue  # pinned in new_problem
        p = s.param_by_id[a.source]
        t = a.stage
        if a.gate is None:
            rows.append(SetRow.make(f"obs_eq+[{aid}]", t, xi={a.source: -1.0}, zeta={aid: 1.0}))
            rows.append(SetRow.make(f"obs_eq-[{aid}]", t, xi={a.source: 1.0}, zeta={aid: -1.0}))
            continue
        m = a.big_m if a.big_m is not None else max(0.0, -p.lo)
        # xi - xi_max (1 - z) <= zeta
        rows.append(SetRow.make(f"obs_lb[{aid}]", t, xi={a.source: 1.0}, zeta={aid: -1.0},
                                dec={a.gate: -p.hi}, const=p.hi))
        # zeta <= xi + M (1 - z)
        rows.append(SetRow.make(f"obs_ub[{aid}]", t, xi={a.source: -1.0}, zeta={aid: 1.0},
                                dec={a.gate: -m}, const=m))
        # xi_min z <= zeta <= xi_max z
        rows.append(SetRow.make(f"obs_gate_lb[{aid}]", t, zeta={aid: -1.0},
                                dec={a.gate: -p.lo}))
        rows.append(SetRow.make(f"obs_gate_ub[{aid}]", t, zeta={aid: 1.0},
                                dec={a.gate: p.hi}))
    return rows


def coefficient_zeroing_rows(skeleton, z_map: dict[tuple[str, str], str], m_coef: float):
    """Deterministic rows -M z <= coef <= M z for every decision-rule slot of
    (variable, aux) pairs named in z_map; requires here-and-now gates.

    Returns (slot index, z var id, bound) triples for the counterpart to turn
    into model rows. Raises if any referenced gate is a recourse variable.
    """
    out = []
    struct = skeleton.struct
    for (var_id, aid), z_var in sorted(z_map.items()):
        zv = struct.var_by_id[z_var]
        if zv.stage != 1:
            raise ValueError(
                f"coefficient zeroing needs here-and-now observation decisions; "
                f"{z_var} is a stage-{zv.stage} recourse variable")
        for slot in skeleton.slots_for(var_id, aid):
            out.append((slot, z_var, m_coef))
    return out
