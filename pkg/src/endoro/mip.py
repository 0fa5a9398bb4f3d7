"""Solver-agnostic MIP kernel.

A :class:`MipModel` is a plain container of bounded variables, linear rows and an
optional set of bilinear rows (models carrying bilinear rows are export-only).
LP relaxations are solved through scipy's HiGHS interface; branch and bound,
the fixed-field MPS writer and the external-solver adapter live here.

Tolerances are centralized: FEAS_TOL (row feasibility), INT_TOL (integrality),
GAP_TOL (relative branch-and-bound gap).
"""

from __future__ import annotations

import heapq
import math
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

FEAS_TOL = 1e-7
INT_TOL = 1e-6
GAP_TOL = 1e-6

LE, GE, EQ = "<=", ">=", "=="

INF = float("inf")


class MipError(Exception):
    """Base error for the kernel."""


class NumericalError(MipError):
    """LP kernel failed numerically even after retries."""


class NotLinearError(MipError):
    """Model carries bilinear rows and cannot be solved by the built-in kernel."""


class ExternalSolverError(MipError):
    """External solver exited abnormally."""


class ExternalSolverTimeout(MipError):
    """External solver hit the wall-clock limit."""


class ExternalSolverOutputMissing(MipError):
    """External solver produced no solution file."""


class SolutionParseError(MipError):
    """Malformed solution file."""


@dataclass
class MipModel:
    """Mixed-integer program: minimize obj subject to linear (and optionally
    bilinear) rows over bounded variables."""

    var_names: list[str] = field(default_factory=list)
    var_lo: list[float] = field(default_factory=list)
    var_hi: list[float] = field(default_factory=list)
    var_int: list[bool] = field(default_factory=list)
    # rows: (name, {var index: coef}, sense, rhs)
    rows: list[tuple[str, dict[int, float], str, float]] = field(default_factory=list)
    # bilinear rows: (name, lin coefs, {(i, j): coef}, sense, rhs)
    quad_rows: list[tuple[str, dict[int, float], dict[tuple[int, int], float], str, float]] = field(
        default_factory=list
    )
    obj: dict[int, float] = field(default_factory=dict)
    obj_const: float = 0.0

    def add_var(self, name: str, lo: float = 0.0, hi: float = INF, integer: bool = False) -> int:
        self.var_names.append(name)
        self.var_lo.append(lo)
        self.var_hi.append(hi)
        self.var_int.append(integer)
        return len(self.var_names) - 1

    def add_row(self, name: str, coefs: dict[int, float], sense: str, rhs: float) -> int:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad sense {sense!r}")
        self.rows.append((name, dict(coefs), sense, rhs))
        return len(self.rows) - 1

    def add_quad_row(self, name, lin, quad, sense, rhs) -> int:
        self.quad_rows.append((name, dict(lin), dict(quad), sense, rhs))
        return len(self.quad_rows) - 1

    @property
    def nvars(self) -> int:
        return len(self.var_names)

    @property
    def is_linear(self) -> bool:
        return not self.quad_rows

    def objective_value(self, x: np.ndarray) -> float:
        return self.obj_const + sum(c * x[j] for j, c in self.obj.items())

    def row_activity(self, x: np.ndarray) -> list[float]:
        return [sum(c * x[j] for j, c in coefs.items()) for _, coefs, _, _ in self.rows]

    def max_violation(self, x: np.ndarray) -> float:
        worst = 0.0
        for (_, coefs, sense, rhs), act in zip(self.rows, self.row_activity(x)):
            if sense == LE:
                worst = max(worst, act - rhs)
            elif sense == GE:
                worst = max(worst, rhs - act)
            else:
                worst = max(worst, abs(act - rhs))
        for j in range(self.nvars):
            worst = max(worst, self.var_lo[j] - x[j], x[j] - self.var_hi[j])
        return worst


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    objective: float | None = None
    # sensitivity of the objective to each row's rhs, aligned with model.rows
    row_duals: np.ndarray | None = None
    lower_duals: np.ndarray | None = None
    upper_duals: np.ndarray | None = None


@dataclass
class MipSolution:
    status: str  # optimal | infeasible | unbounded | gap-limit | time-limit | node-limit
    x: np.ndarray | None = None
    objective: float | None = None
    bound: float = -INF
    nodes: int = 0

    @property
    def gap(self) -> float:
        if self.objective is None:
            return INF
        return (self.objective - self.bound) / max(1.0, abs(self.objective))


class _LpData:
    """Cached scipy arrays for a model; only bounds change between B&B nodes."""

    def __init__(self, model: MipModel):
        if not model.is_linear:
            raise NotLinearError("model has bilinear rows; export it instead")
        self.model = model
        n = model.nvars
        self.c = np.zeros(n)
        for j, v in model.obj.items():
            self.c[j] = v
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        self.ub_map: list[tuple[int, float]] = []  # (model row idx, sign)
        self.eq_map: list[int] = []
        for i, (_, coefs, sense, rhs) in enumerate(model.rows):
            if sense == EQ:
                eq_rows.append(coefs)
                eq_rhs.append(rhs)
                self.eq_map.append(i)
            elif sense == LE:
                ub_rows.append(coefs)
                ub_rhs.append(rhs)
                self.ub_map.append((i, 1.0))
            else:
                ub_rows.append({j: -c for j, c in coefs.items()})
                ub_rhs.append(-rhs)
                self.ub_map.append((i, -1.0))
        self.A_ub = _to_csr(ub_rows, n)
        self.b_ub = np.array(ub_rhs) if ub_rhs else None
        self.A_eq = _to_csr(eq_rows, n)
        self.b_eq = np.array(eq_rhs) if eq_rhs else None

    def solve(self, lo: np.ndarray, hi: np.ndarray) -> LpSolution:
        bounds = list(zip(np.where(np.isneginf(lo), None, lo), np.where(np.isposinf(hi), None, hi)))
        res = None
        for opts in ({}, {"presolve": False}):
            res = linprog(
                self.c,
                A_ub=self.A_ub,
                b_ub=self.b_ub,
                A_eq=self.A_eq,
                b_eq=self.b_eq,
                bounds=bounds,
                method="highs",
                options=opts,
            )
            if res.status != 4:
                break
        if res.status == 4:
            raise NumericalError(res.message)
        if res.status == 2:
            return LpSolution(status="infeasible")
        if res.status == 3:
            return LpSolution(status="unbounded")
        if res.status != 0:
            raise NumericalError(res.message)
        nrows = len(self.model.rows)
        row_duals = np.zeros(nrows)
        if self.b_ub is not None:
            for k, (i, sign) in enumerate(self.ub_map):
                row_duals[i] = sign * res.ineqlin.marginals[k]
        if self.b_eq is not None:
            for k, i in enumerate(self.eq_map):
                row_duals[i] = res.eqlin.marginals[k]
        return LpSolution(
            status="optimal",
            x=res.x,
            objective=res.fun + self.model.obj_const,
            row_duals=row_duals,
            lower_duals=np.asarray(res.lower.marginals),
            upper_duals=np.asarray(res.upper.marginals),
        )


def _to_csr(rows: list[dict[int, float]], n: int):
    if not rows:
        return None
    data, ri, ci = [], [], []
    for i, coefs in enumerate(rows):
        for j, c in coefs.items():
            if c != 0.0:
                ri.append(i)
                ci.append(j)
                data.append(c)
    return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))


def solve_lp(model: MipModel) -> LpSolution:
    """Solve the model ignoring integrality; status is solver-certified."""
    data = _LpData(model)
    return data.solve(np.array(model.var_lo, dtype=float), np.array(model.var_hi, dtype=float))


def solve_mip(
    model: MipModel,
    gap_tol: float = GAP_TOL,
    time_limit: float | None = None,
    node_limit: int | None = None,
    cutoff: float | None = None,
) -> MipSolution:
    """Branch and bound: best-bound node selection, most-fractional branching,
    ties broken by lowest variable index.

    cutoff: prune nodes whose bound is >= cutoff (useful when scanning many
    models for the minimum); the returned status may then be 'gap-limit'.
    """
    data = _LpData(model)
    lo0 = np.array(model.var_lo, dtype=float)
    hi0 = np.array(model.var_hi, dtype=float)
    int_idx = [j for j, isint in enumerate(model.var_int) if isint]

    start = time.monotonic()
    incumbent = None
    incumbent_obj = INF if cutoff is None else cutoff
    have_real_incumbent = False
    nodes = 0
    seq = 0
    root = data.solve(lo0, hi0)
    if root.status == "infeasible":
        return MipSolution(status="infeasible", nodes=1)
    if root.status == "unbounded":
        return MipSolution(status="unbounded", nodes=1)
    heap: list[tuple[float, int, np.ndarray, np.ndarray, LpSolution]] = []
    heapq.heappush(heap, (root.objective, seq, lo0, hi0, root))

    def status_done(status: str) -> MipSolution:
        bound = heap[0][0] if heap else (incumbent_obj if have_real_incumbent else -INF)
        if have_real_incumbent:
            return MipSolution(status=status, x=incumbent, objective=incumbent_obj,
                               bound=min(bound, incumbent_obj), nodes=nodes)
        return MipSolution(status=status, bound=bound, nodes=nodes)

    while heap:
        bound, _, lo, hi, rel = heapq.heappop(heap)
        if bound >= incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)):
            # best-first order: every remaining node is at least as bad
            break
        nodes += 1
        x = rel.x
        # most fractional = fractional part closest to .5; ties by lowest index
        fracs = [(abs(abs(x[j] - round(x[j])) - 0.5), j) for j in int_idx
                 if abs(x[j] - round(x[j])) > INT_TOL]
        if not fracs:
            if rel.objective < incumbent_obj - 1e-12:
                incumbent = x.copy()
                for j in int_idx:
                    incumbent[j] = round(incumbent[j])
                incumbent_obj = rel.objective
                have_real_incumbent = True
            continue
        fracs.sort(key=lambda t: (t[0], t[1]))
        j = fracs[0][1]
        fl = math.floor(x[j] + INT_TOL)
        for clo, chi in ((lo[j], fl), (fl + 1, hi[j])):
            if clo > chi:
                continue
            nlo, nhi = lo.copy(), hi.copy()
            nlo[j], nhi[j] = max(lo[j], clo), min(hi[j], chi)
            child = data.solve(nlo, nhi)
            if child.status != "optimal":
                continue
            if child.objective < incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)):
                seq += 1
                heapq.heappush(heap, (child.objective, seq, nlo, nhi, child))
        if time_limit is not None and time.monotonic() - start > time_limit:
            return status_done("time-limit")
        if node_limit is not None and nodes >= node_limit:
            return status_done("node-limit")

    if have_real_incumbent:
        bound = heap[0][0] if heap else incumbent_obj
        return MipSolution(status="optimal", x=incumbent, objective=incumbent_obj,
                           bound=min(bound, incumbent_obj), nodes=max(nodes, 1))
    if cutoff is not None:
        # everything pruned against the external cutoff
        return MipSolution(status="gap-limit", bound=cutoff, nodes=max(nodes, 1))
    return MipSolution(status="infeasible", nodes=max(nodes, 1))


# ---------------------------------------------------------------------------
# MPS writer / solution reader / external adapter
# ---------------------------------------------------------------------------

def _mangle_var(j: int) -> str:
    return f"X{j:07d}"


def _mangle_row(i: int) -> str:
    return f"R{i:07d}"


def _num(v: float) -> str:
    return f"{v:.12G}"


def write_mps(model: MipModel, destination) -> None:
    """Fixed-field MPS with OBJSENSE, MARKER integer sections and explicit bounds.

    Names are mangled to <= 8 chars deterministically; the mangling table is
    written next to the file as <destination>.names. Identical models produce
    identical bytes.
    """
    dest = Path(destination)
    lines = ["NAME          ENDORO", "OBJSENSE", "    MIN", "ROWS", " N  OBJ"]
    sense_tag = {LE: "L", GE: "G", EQ: "E"}
    for i, (name, _, sense, _) in enumerate(model.rows):
        lines.append(f" {sense_tag[sense]}  {_mangle_row(i)}")
    for k, (name, _, _, sense, _) in enumerate(model.quad_rows):
        lines.append(f" {sense_tag[sense]}  Q{k:07d}")
    lines.append("COLUMNS")
    # column-major entries
    col_entries: list[list[tuple[str, float]]] = [[] for _ in range(model.nvars)]
    for j, c in model.obj.items():
        if c != 0.0:
            col_entries[j].append(("OBJ", c))
    for i, (_, coefs, _, _) in enumerate(model.rows):
        for j, c in coefs.items():
            if c != 0.0:
                col_entries[j].append((_mangle_row(i), c))
    for k, (_, lin, _, _, _) in enumerate(model.quad_rows):
        for j, c in lin.items():
            if c != 0.0:
                col_entries[j].append((f"Q{k:07d}", c))
    marker_on = False
    nmark = 0
    for j in range(model.nvars):
        if model.var_int[j] != marker_on:
            tag = "'INTORG'" if model.var_int[j] else "'INTEND'"
            lines.append(f"    MARKER{nmark:02d}  'MARKER'                 {tag}")
            marker_on = model.var_int[j]
            nmark += 1
        vn = _mangle_var(j)
        entries = col_entries[j] or [("OBJ", 0.0)]
        for rn, c in entries:
            lines.append(f"    {vn:<10}{rn:<10}{_num(c)}")
    if marker_on:
        lines.append(f"    MARKER{nmark:02d}  'MARKER'                 'INTEND'")
    lines.append("RHS")
    for i, (_, _, _, rhs) in enumerate(model.rows):
        if rhs != 0.0:
            lines.append(f"    RHS       {_mangle_row(i):<10}{_num(rhs)}")
    for k, (_, _, _, _, rhs) in enumerate(model.quad_rows):
        if rhs != 0.0:
            lines.append(f"    RHS       Q{k:07d}   {_num(rhs)}")
    lines.append("BOUNDS")
    for j in range(model.nvars):
        vn = _mangle_var(j)
        lo, hi = model.var_lo[j], model.var_hi[j]
        if model.var_int[j] and (math.isinf(lo) or math.isinf(hi)):
            raise MipError(f"integer variable {model.var_names[j]} needs finite bounds for MPS")
        if lo == hi:
            lines.append(f" FX BND       {vn:<10}{_num(lo)}")
            continue
        if model.var_int[j] and lo == 0.0 and hi == 1.0:
            lines.append(f" BV BND       {vn}")
            continue
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" FR BND       {vn}")
            continue
        if math.isinf(lo):
            lines.append(f" MI BND       {vn}")
        elif lo != 0.0 or model.var_int[j]:
            lines.append(f" LO BND       {vn:<10}{_num(lo)}")
        if not math.isinf(hi):
            lines.append(f" UP BND       {vn:<10}{_num(hi)}")
    for k, (_, _, quad, _, _) in enumerate(model.quad_rows):
        lines.append(f"QCMATRIX Q{k:07d}")
        for (a, b), c in sorted(quad.items()):
            lines.append(f"    {_mangle_var(a):<10}{_mangle_var(b):<10}{_num(c)}")
    lines.append("ENDATA")
    dest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    names = ["# mangled\toriginal"]
    names += [f"{_mangle_var(j)}\t{n}" for j, n in enumerate(model.var_names)]
    names += [f"{_mangle_row(i)}\t{r[0]}" for i, r in enumerate(model.rows)]
    Path(str(dest) + ".names").write_text("\n".join(names) + "\n", encoding="utf-8")


def read_solution(model: MipModel, source) -> MipSolution:
    """Parse a "name value" solution file.

    Unknown names are ignored; known names with a malformed value raise with
    the offending line number. An optional "=status= WORD" line overrides the
    status; otherwise a nonempty value set means 'optimal', an empty one
    'infeasible'.
    """
    text = Path(source).read_text(encoding="utf-8")
    by_name = {n: j for j, n in enumerate(model.var_names)}
    by_name.update({_mangle_var(j): j for j in range(model.nvars)})
    x = np.array([max(lo, min(hi, 0.0)) if not math.isinf(lo) else 0.0
                  for lo, hi in zip(model.var_lo, model.var_hi)], dtype=float)
    seen = False
    status = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if len(parts) != 2:
            continue
        nm, val = parts
        if nm == "=status=":
            status = val.lower()
            continue
        if nm not in by_name:
            continue
        try:
            x[by_name[nm]] = float(val)
        except ValueError:
            raise SolutionParseError(f"line {lineno}: bad value {val!r} for {nm}")
        seen = True
    if status is None:
        status = "optimal" if seen else "infeasible"
    if not seen:
        return MipSolution(status=status)
    return MipSolution(status=status, x=x, objective=model.objective_value(x), bound=-INF)


def external_solve(model: MipModel, command_template: str, timeout: float | None = None) -> MipSolution:
    """Write MPS, run `command_template` ({mps} and {sol} placeholders), parse
    the solution file. No solver-specific logic beyond the template."""
    with tempfile.TemporaryDirectory(prefix="endoro_") as tmp:
        mps = Path(tmp) / "model.mps"
        sol = Path(tmp) / "model.sol"
        write_mps(model, mps)
        cmd = command_template.format(mps=str(mps), sol=str(sol))
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as e:
            raise ExternalSolverTimeout(f"external solver timed out after {timeout}s") from e
        if proc.returncode != 0:
            excerpt = (proc.stderr or proc.stdout or "").strip()[-400:]
            raise ExternalSolverError(f"external solver exited {proc.returncode}: {excerpt}")
        if not sol.exists():
            raise ExternalSolverOutputMissing(f"no solution file at {sol}")
        return read_solution(model, sol)
