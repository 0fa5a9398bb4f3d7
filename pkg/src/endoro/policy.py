"""Decision rules over the lifted coordinates.

Every decision variable at stage t is an affine function of the lifted
coordinates of the auxiliary copies visible to it at stages <= t: continuous
variables get both piecewise-linear (zbar) and indicator (zhat) blocks, binary
variables get indicator blocks with integer coefficients in {-1,0,1} (first
stage: directly {0,1}, since the only stage-1 coordinate is the constant).
With the [0,1] range rows enforced robustly, binary realizations are integral
and the recourse integrality can be relaxed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from endoro.lifting import lift_value
from endoro.model import BINARY, CONST_AUX, CONTINUOUS, ProblemSpec, Structure

INT_EVAL_TOL = 1e-6


@dataclass(frozen=True)
class Slot:
    """One decision-rule coefficient: variable var_id times lifted coordinate
    (aux_id, comp) where comp indexes zbar (0..r-1) then zhat (r..r+g-1)."""

    var_id: str
    aux_id: str
    comp: int
    integer: bool
    lo: float
    hi: float


class PolicySkeleton:
    """Symbolic decision rule: one slot per coefficient of Eq.-style blocks."""

    def __init__(self, problem: ProblemSpec, static: bool = False):
        self.problem = problem
        self.struct = problem.structure()
        self.static = static
        self.slots: list[Slot] = []
        self._by_var_aux: dict[tuple[str, str], list[int]] = {}
        s = self.struct
        for v in problem.vars:
            aux_ids = [CONST_AUX] if static else s.visible_aux(v.id)
            if CONST_AUX not in aux_ids:
                aux_ids = [CONST_AUX] + aux_ids
            for aid in aux_ids:
                sp = s.lifted[aid]
                idxs = []
                if v.kind == CONTINUOUS:
                    for comp in range(sp.r + sp.g):
                        idxs.append(self._add(Slot(v.id, aid, comp, False, -np.inf, np.inf)))
                else:
                    first_stage = v.stage == 1 and aid == CONST_AUX
                    lo = 0.0 if first_stage else -1.0
                    for comp in range(sp.r, sp.r + sp.g):
                        idxs.append(self._add(Slot(v.id, aid, comp, True, lo, 1.0)))
                self._by_var_aux[(v.id, aid)] = idxs

    def _add(self, slot: Slot) -> int:
        self.slots.append(slot)
        return len(self.slots) - 1

    def slots_for(self, var_id: str, aux_id: str | None = None) -> list[int]:
        if aux_id is not None:
            return list(self._by_var_aux.get((var_id, aux_id), []))
        out = []
        for (vid, _), idxs in self._by_var_aux.items():
            if vid == var_id:
                out.extend(idxs)
        return out

    def var_blocks(self, var_id: str) -> list[tuple[str, list[int]]]:
        """(aux_id, slot indices) pairs for one variable, deterministic order."""
        out = []
        for aid in self.struct.aux_order:
            key = (var_id, aid)
            if key in self._by_var_aux:
                out.append((aid, self._by_var_aux[key]))
        return out

    @property
    def n_slots(self) -> int:
        return len(self.slots)


def build_skeleton(problem: ProblemSpec, static: bool = False) -> PolicySkeleton:
    return PolicySkeleton(problem, static=static)


@dataclass
class DecisionRulePolicy:
    """Concrete coefficients for a skeleton."""

    skeleton: PolicySkeleton
    values: np.ndarray

    def coefficients(self, var_id: str) -> dict[str, np.ndarray]:
        out = {}
        for aid, idxs in self.skeleton.var_blocks(var_id):
            out[aid] = self.values[idxs]
        return out


class PolicyInvalidError(ValueError):
    """A binary realization fell outside the integrality tolerance."""


def lifted_coords(struct: Structure, realization: dict[str, float]) -> dict[str, np.ndarray]:
    """Lift a zeta trajectory {aux id: value}; the constant copy defaults to 1."""
    coords = {}
    for aid in struct.aux_order:
        sp = struct.lifted[aid]
        val = 1.0 if aid == CONST_AUX else realization.get(aid, 0.0)
        vb, vh = lift_value(sp, val)
        coords[aid] = np.concatenate([vb, vh])
    return coords


def evaluate(policy: DecisionRulePolicy, realization: dict[str, float],
             round_binaries: bool = True) -> dict[str, float]:
    """Apply the rule at a concrete zeta trajectory.

    Stage-t outputs only read coordinates of stages <= t; binary outputs must
    land within INT_EVAL_TOL of {0, 1} and are rounded.
    """
    sk = policy.skeleton
    coords = lifted_coords(sk.struct, realization)
    out: dict[str, float] = {}
    for v in sk.problem.vars:
        val = 0.0
        for aid, idxs in sk.var_blocks(v.id):
            cv = coords[aid]
            for i in idxs:
                val += float(policy.values[i]) * cv[sk.slots[i].comp]
        out[v.id] = val
    if round_binaries:
        for v in sk.problem.vars:
            if v.kind == BINARY:
                r = round(out[v.id])
                if abs(out[v.id] - r) > INT_EVAL_TOL or r not in (0, 1):
                    raise PolicyInvalidError(
                        f"{v.id} evaluates to {out[v.id]:.9g}, not binary")
                out[v.id] = float(r)
    return out


def range_row_specs(skeleton: PolicySkeleton) -> list[tuple[str, str, int]]:
    """(row kind, var id, stage) pairs needing robust [0,1] range rows: every
    binary variable whose rule has more than the tightened first-stage slot."""
    out = []
    for v in skeleton.problem.vars:
        if v.kind != BINARY:
            continue
        idxs = skeleton.slots_for(v.id)
        if len(idxs) == 1 and skeleton.slots[idxs[0]].lo == 0.0:
            continue  # single {0,1} slot, bounds already enforce the range
        out.append(("range", v.id, v.stage))
    return out


def serialize_policy(policy: DecisionRulePolicy) -> str:
    """Plain-text block dump: variable, aux copy, coefficients as decimal
    strings, in deterministic order."""
    lines = ["# endoro policy v1"]
    for v in policy.skeleton.problem.vars:
        for aid, idxs in policy.skeleton.var_blocks(v.id):
            vals = " ".join(repr(float(policy.values[i])) for i in idxs)
            lines.append(f"{v.id}\t{aid}\t{vals}")
    return "\n".join(lines) + "\n"


def deserialize_policy(skeleton: PolicySkeleton, text: str) -> DecisionRulePolicy:
    values = np.zeros(skeleton.n_slots)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'var<TAB>aux<TAB>coefs'")
        vid, aid, vals = parts
        idxs = skeleton.slots_for(vid, aid)
        nums = [float(x) for x in vals.split()]
        if len(nums) != len(idxs):
            raise ValueError(f"line {lineno}: expected {len(idxs)} coefficients")
        for i, x in zip(idxs, nums):
            values[i] = x
    return DecisionRulePolicy(skeleton, values)
