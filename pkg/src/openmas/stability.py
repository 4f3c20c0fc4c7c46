"""A-posteriori stability analysis of realized OPDC traces.

Everything here is computed from a finished trace: the empirical constants
are the tightest values valid on that realization, so any radius derived
from them certifies that run only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .dyn_graph import CONNECTIVITY_TOL, GraphSnapshot, algebraic_connectivity
from .errors import HypothesisViolatedError, InvalidInputError
from .opdc import OpdcParams, contraction_factor
from .open_state import OpenVector, infinity_norm, mean_and_deviation, open_distance

__all__ = [
    "TraceRecord",
    "make_record",
    "EmpiricalConstants",
    "estimate_constants",
    "radius_general",
    "OpdcRadius",
    "radius_opdc",
    "radius_opdc_disconnected",
    "AssumptionReport",
    "verify_assumptions",
    "StepInequalityReport",
    "check_step_inequality",
    "check_open_stability",
    "stability_report",
]

# Absolute slack for trace inequalities, scaled by (1 + larger side).
TRACE_TOL = 1e-9
# Slack on the open-stability envelope.
STABILITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """State, reference and fixed point at one step, plus normalized distances.

    ``dist_state_tpi``, ``dist_tpi_mean`` and ``dist_state_mean`` are
    ``d(x, x_e)``, ``d(x_e, mean(u) 1)`` and ``d(x, mean(u) 1)``, each divided
    by ``sqrt(n)``.
    """

    k: int
    graph: GraphSnapshot
    x: OpenVector
    u: OpenVector
    x_e: OpenVector
    u_mean: float
    dist_state_tpi: float
    dist_tpi_mean: float
    dist_state_mean: float

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def lambda2(self) -> float:
        return algebraic_connectivity(self.graph)


def make_record(k: int, graph: GraphSnapshot, x: OpenVector, u: OpenVector, x_e: OpenVector) -> TraceRecord:
    for name, vec in (("x", x), ("u", u), ("x_e", x_e)):
        if not vec.same_support(graph.nodes):
            raise InvalidInputError(f"record {k}: support of {name} differs from graph nodes")
    u_mean, _ = mean_and_deviation(u)
    ubar = OpenVector.constant(graph.nodes, u_mean)
    root_n = math.sqrt(graph.n)
    return TraceRecord(
        k=k,
        graph=graph,
        x=x,
        u=u,
        x_e=x_e,
        u_mean=u_mean,
        dist_state_tpi=open_distance(x, x_e) / root_n,
        dist_tpi_mean=open_distance(x_e, ubar) / root_n,
        dist_state_mean=open_distance(x, ubar) / root_n,
    )


def _arrival_mismatch(prev: TraceRecord, cur: TraceRecord) -> float:
    """sqrt of the summed squared gap between arrivals' states and their TPI entries."""
    arriving = np.setdiff1d(cur.graph.nodes, prev.graph.nodes, assume_unique=True)
    if arriving.size == 0:
        return 0.0
    pos = np.searchsorted(cur.graph.nodes, arriving)
    gap = cur.x.values[pos] - cur.x_e.values[pos]
    return math.sqrt(math.fsum((gap * gap).tolist()))


def _check_trace(trace: Sequence[TraceRecord], min_len: int) -> None:
    if len(trace) < min_len:
        raise InvalidInputError(f"trace needs at least {min_len} records, got {len(trace)}")
    for prev, cur in zip(trace[:-1], trace[1:]):
        if cur.k != prev.k + 1:
            raise InvalidInputError(f"trace steps not consecutive: {prev.k} then {cur.k}")


def _graph_stats(trace: Sequence[TraceRecord], p: OpdcParams) -> tuple[list[float], list[float]]:
    # spectra are cached per graph object, so unchanged topologies cost nothing
    gammas: list[float] = []
    lambdas: list[float] = []
    last: Optional[GraphSnapshot] = None
    for rec in trace:
        if rec.graph is not last:
            g_val = contraction_factor(rec.graph, p)
            l_val = algebraic_connectivity(rec.graph)
            last = rec.graph
        gammas.append(g_val)
        lambdas.append(l_val)
    return gammas, lambdas


@dataclass(frozen=True)
class EmpiricalConstants:
    """Tightest constants valid on one realized trace (labelled empirical)."""

    gamma_hat: float
    beta_hat: float
    B_hat: float
    H_hat: float
    Pi_hat: float
    U_hat: float
    lambda_bar_sq_hat: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def estimate_constants(trace: Sequence[TraceRecord], p: OpdcParams) -> EmpiricalConstants:
    """Maxima/minima over the trace of every quantity the radius formulas need.

    ``B_hat`` bounds the normalized TPI movement, ``H_hat`` the normalized
    arrival mismatch, ``U_hat`` the normalized movement of the reference
    mean, ``Pi_hat`` the infinity norm of the reference deviation.
    """
    _check_trace(trace, 2)
    gammas, lambdas = _graph_stats(trace, p)
    beta = math.inf
    b_hat = h_hat = u_hat = 0.0
    pi_hat = 0.0
    for rec in trace:
        _, dev = mean_and_deviation(rec.u)
        pi_hat = max(pi_hat, infinity_norm(dev))
    for prev, cur in zip(trace[:-1], trace[1:]):
        root = math.sqrt(cur.n)
        beta = min(beta, math.sqrt(cur.n / prev.n))
        b_hat = max(b_hat, open_distance(cur.x_e, prev.x_e) / root)
        h_hat = max(h_hat, _arrival_mismatch(prev, cur) / root)
        ubar_prev = OpenVector.constant(prev.graph.nodes, prev.u_mean)
        ubar_cur = OpenVector.constant(cur.graph.nodes, cur.u_mean)
        u_hat = max(u_hat, open_distance(ubar_cur, ubar_prev) / root)
    return EmpiricalConstants(
        gamma_hat=max(gammas),
        beta_hat=beta,
        B_hat=b_hat,
        H_hat=h_hat,
        Pi_hat=pi_hat,
        U_hat=u_hat,
        lambda_bar_sq_hat=min(lambdas),
    )


def radius_general(gamma: float, B: float, H: float, beta: float) -> float:
    """Stability radius ``(B + H) / (1 - gamma / beta)`` of a contractive system."""
    if not 0.0 <= gamma < 1.0:
        raise HypothesisViolatedError(f"contraction factor {gamma} outside [0, 1)")
    if not beta > gamma:
        raise HypothesisViolatedError(f"beta={beta} must exceed gamma={gamma}")
    if B < 0 or H < 0:
        raise InvalidInputError("B and H must be non-negative")
    return (B + H) / (1.0 - gamma / beta)


@dataclass(frozen=True)
class OpdcRadius:
    R: float
    B: float
    H: float


def _connectivity_gain(p: OpdcParams, lambda_bar_sq: float) -> float:
    # second-largest eigenvalue of alpha (alpha I + eps L)^-1 under the floor
    return 1.0 / (1.0 + (p.epsilon / p.alpha) * lambda_bar_sq)


def radius_opdc(p: OpdcParams, lambda_bar_sq: float, beta: float, Pi: float, U: float) -> OpdcRadius:
    """OPDC stability radius together with the TPI-variation and join bounds.

    ``B = c (1 + 1/beta) Pi + U`` and ``H = (1 + c) Pi`` with
    ``c = 1 / (1 + (epsilon/alpha) lambda_bar_sq)``; ``R`` is the general
    radius with ``gamma = 1 - alpha``, written out in closed form.
    """
    if lambda_bar_sq < 0:
        raise InvalidInputError("connectivity floor must be non-negative")
    if Pi < 0 or U < 0:
        raise InvalidInputError("Pi and U must be non-negative")
    if not beta > 1.0 - p.alpha:
        raise HypothesisViolatedError(f"beta={beta} must exceed 1 - alpha = {1.0 - p.alpha}")
    c = _connectivity_gain(p, lambda_bar_sq)
    B = c * (1.0 + 1.0 / beta) * Pi + U
    H = (1.0 + c) * Pi
    R = ((1.0 + 2.0 * c + c / beta) * Pi + U) / (1.0 - (1.0 - p.alpha) / beta)
    return OpdcRadius(R=R, B=B, H=H)


def radius_opdc_disconnected(p: OpdcParams, beta: float, Pi: float, U: float) -> float:
    """Radius without any connectivity guarantee: ``((3 beta + 1) Pi + beta U) / (alpha + beta - 1)``."""
    if Pi < 0 or U < 0:
        raise InvalidInputError("Pi and U must be non-negative")
    if not p.alpha + beta > 1.0:
        raise HypothesisViolatedError(f"alpha + beta = {p.alpha + beta} must exceed 1")
    return ((3.0 * beta + 1.0) * Pi + beta * U) / (p.alpha + beta - 1.0)


@dataclass
class AssumptionItem:
    passed: bool
    first_violation: Optional[int] = None
    detail: str = ""


@dataclass
class AssumptionReport:
    undirected: AssumptionItem
    degree_bound: AssumptionItem
    population_decay: AssumptionItem
    beta_hat: float
    beta_required: Optional[float]
    max_degree: int
    degree_limit: float
    theorem_hypothesis: bool
    lambda_bar_sq_hat: float
    uniformly_connected: bool

    @property
    def all_items_pass(self) -> bool:
        return self.undirected.passed and self.degree_bound.passed and self.population_decay.passed

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["all_items_pass"] = self.all_items_pass
        return out


def verify_assumptions(
    trace: Sequence[TraceRecord], p: OpdcParams, beta_required: Optional[float] = None
) -> AssumptionReport:
    """Check the graph and population assumptions step by step.

    ``beta_required`` is the rate the population-decay item is checked
    against; when omitted the item holds with the realized ``beta_hat``.
    Never raises on violations; everything lands in the report.
    """
    if not trace:
        raise InvalidInputError("empty trace")
    und = AssumptionItem(True)
    deg = AssumptionItem(True)
    pop = AssumptionItem(True)
    max_deg = 0
    last = None
    for rec in trace:
        g = rec.graph
        if g is last:
            continue
        last = g
        e = g.edges
        if und.passed and e.size and (np.any(e[:, 0] >= e[:, 1]) or not np.isin(e, g.nodes).all()):
            und = AssumptionItem(False, rec.k, "edge set is not a valid undirected pair set")
        md = g.max_degree
        max_deg = max(max_deg, md)
        if deg.passed and md > p.max_degree:
            deg = AssumptionItem(False, rec.k, f"max degree {md} exceeds {p.max_degree:g}")

    beta_hat = math.inf
    for prev, cur in zip(trace[:-1], trace[1:]):
        ratio = math.sqrt(cur.n / prev.n)
        beta_hat = min(beta_hat, ratio)
        if pop.passed and beta_required is not None and ratio < beta_required:
            pop = AssumptionItem(
                False, prev.k, f"sqrt(n_{{k+1}}/n_k) = {ratio:.6g} below required {beta_required:g}"
            )
    if math.isinf(beta_hat):
        beta_hat = 1.0
    _, lambdas = _graph_stats(trace, p)
    lam = min(lambdas)
    return AssumptionReport(
        undirected=und,
        degree_bound=deg,
        population_decay=pop,
        beta_hat=beta_hat,
        beta_required=beta_required,
        max_degree=max_deg,
        degree_limit=p.max_degree,
        theorem_hypothesis=beta_hat > 1.0 - p.alpha,
        lambda_bar_sq_hat=lam,
        uniformly_connected=lam > CONNECTIVITY_TOL,
    )


@dataclass
class StepInequalityReport:
    """Outcome of the per-step proof-chain check.

    ``tightest_ratio`` is the largest ``lhs / rhs`` seen, at ``tightest_step``.
    """

    steps_checked: int
    violations: list[int] = field(default_factory=list)
    tightest_step: Optional[int] = None
    tightest_ratio: float = 0.0
    worst_excess: float = -math.inf

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {
            "steps_checked": self.steps_checked,
            "violations": len(self.violations),
            "first_violations": self.violations[:10],
            "tightest_step": self.tightest_step,
            "tightest_ratio": self.tightest_ratio,
            "worst_excess": self.worst_excess if math.isfinite(self.worst_excess) else None,
            "passed": self.passed,
        }


def check_step_inequality(trace: Sequence[TraceRecord], p: OpdcParams) -> StepInequalityReport:
    """Verify ``d(x', x_e') <= gamma_k d(x, x_e) + d(x_e', x_e) + arrival mismatch`` per step.

    ``gamma_k`` is the spectral norm of the full update matrix at step
    ``k``.  Holds for any correct engine; a violation means a bug.
    """
    _check_trace(trace, 1)
    gammas, _ = _graph_stats(trace, p)
    report = StepInequalityReport(steps_checked=len(trace) - 1)
    for idx, (prev, cur) in enumerate(zip(trace[:-1], trace[1:])):
        lhs = open_distance(cur.x, cur.x_e)
        rhs = (
            gammas[idx] * open_distance(prev.x, prev.x_e)
            + open_distance(cur.x_e, prev.x_e)
            + _arrival_mismatch(prev, cur)
        )
        excess = lhs - rhs
        if excess > TRACE_TOL * (1.0 + max(lhs, rhs)):
            report.violations.append(prev.k)
        report.worst_excess = max(report.worst_excess, excess)
        ratio = lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 0.0)
        if report.tightest_step is None or ratio > report.tightest_ratio:
            report.tightest_step = prev.k
            report.tightest_ratio = ratio
    return report


def check_open_stability(trace: Sequence[TraceRecord], R: float) -> bool:
    """Whether every normalized distance to the TPI stays below ``max(q_0, R)``."""
    if R < 0:
        raise InvalidInputError("radius must be non-negative")
    if not trace:
        return True
    bound = max(trace[0].dist_state_tpi, R) + STABILITY_TOL
    return all(rec.dist_state_tpi <= bound for rec in trace)


def stability_report(
    trace: Sequence[TraceRecord], p: OpdcParams, beta_required: Optional[float] = None
) -> dict[str, Any]:
    """Full verification bundle for one trace, as a JSON-ready dict.

    The radius uses the connected formula when the empirical connectivity
    floor is positive and the disconnected one otherwise.  ``passed`` is
    true iff every assumption item holds, a radius exists, the per-step
    inequality has no violation and the trace stays inside the envelope.
    """
    assumptions = verify_assumptions(trace, p, beta_required)
    out: dict[str, Any] = {
        "params": {"epsilon": p.epsilon, "alpha": p.alpha},
        "records": len(trace),
        "assumptions": assumptions.to_dict(),
    }
    if len(trace) < 2:
        out["constants"] = None
        out["radius"] = {"status": "trace too short"}
        out["passed"] = assumptions.all_items_pass
        return out

    consts = estimate_constants(trace, p)
    out["constants"] = {"kind": "empirical", **consts.to_dict()}
    radius: dict[str, Any]
    R: Optional[float] = None
    try:
        if consts.lambda_bar_sq_hat > CONNECTIVITY_TOL:
            res = radius_opdc(p, consts.lambda_bar_sq_hat, consts.beta_hat, consts.Pi_hat, consts.U_hat)
            R = res.R
            radius = {"formula": "connected", "status": "ok", "R": R, "B": res.B, "H": res.H}
        else:
            R = radius_opdc_disconnected(p, consts.beta_hat, consts.Pi_hat, consts.U_hat)
            radius = {"formula": "disconnected", "status": "ok", "R": R}
    except HypothesisViolatedError as exc:
        radius = {"status": "hypothesis violated", "R": None, "detail": str(exc)}
    out["radius"] = radius

    ineq = check_step_inequality(trace, p)
    out["step_inequality"] = ineq.to_dict()

    q = [rec.dist_state_tpi for rec in trace]
    stable = check_open_stability(trace, R) if R is not None else False
    out["open_stability"] = {
        "q0": q[0],
        "q_max": max(q),
        "q_final": q[-1],
        "bound": None if R is None else max(q[0], R),
        "passed": stable,
    }
    out["passed"] = bool(assumptions.all_items_pass and R is not None and ineq.passed and stable)
    return out
