"""Offline ground truth: horizon LP, exact branch-and-bound, dual certificate.

Three independent reference points for judging the online algorithms:

* ``solve_relaxation`` — one LP over the whole horizon with fractional
  instance counts and explicit deployment variables coupling consecutive
  slots; its optimum lower-bounds every integer deployment.
* ``solve_exact`` — branch-and-bound on the instance-count variables at desk
  scale, giving the true integer optimum (or best-found plus gap under
  node/time limits).
* ``build_dual_certificate`` — a feasible point of the horizon LP's dual
  assembled from the online subproblem multipliers; its objective is a lower
  bound on the LP optimum that needs no offline solve at all.
"""

from __future__ import annotations

import csv
import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .layout import SlotLayout
from .model import ProblemInstance, SlotInput
from .orfa import FractionalPlan
from .rates import delay_coefficients, slot_rates, vnf_demand
from .rounding import IntegerPlan
from .solver import INFEASIBLE, OPTIMAL, LinearProgram, solve_lp

__all__ = [
    "HorizonProgram",
    "RelaxationResult",
    "ExactResult",
    "DualCertificate",
    "RatioReport",
    "solve_relaxation",
    "solve_exact",
    "build_dual_certificate",
    "check_certificate",
    "min_positive_deployment",
    "compute_ratios",
    "write_ratio_csv",
    "write_certificate_csv",
]


class HorizonProgram:
    """The full-horizon LP: per-slot routing blocks plus deployment coupling.

    Variable order: for each slot its (q, y, x) block, then one deployment
    block per slot.  Instance counts are capped only where their rent is
    zero (the cap is demand-based and never binds at an optimum otherwise);
    deployment variables are charged the deploy cost and forced above the
    count increase by coupling rows.
    """

    def __init__(self, inst: ProblemInstance, slots):
        self.inst = inst
        self.slots = list(slots)
        self.rates = [slot_rates(inst, s) for s in self.slots]
        self.layouts = [SlotLayout(inst, r, with_q=True) for r in self.rates]
        self.offsets = []
        n = 0
        for lay in self.layouts:
            self.offsets.append(n)
            n += lay.n_vars
        self.rho_offsets = []
        MI = inst.num_vnfs * inst.num_datacenters
        for _ in self.layouts:
            self.rho_offsets.append(n)
            n += MI
        self.n_vars = n
        self.lp = self._assemble()

    def q_index(self, t: int, m: int, i: int) -> int:
        return self.offsets[t] + self.layouts[t].q_idx(m, i)

    def _assemble(self) -> LinearProgram:
        inst = self.inst
        M, I = inst.num_vnfs, inst.num_datacenters
        MI = M * I
        c = np.zeros(self.n_vars)
        lb = np.zeros(self.n_vars)
        ub = np.full(self.n_vars, np.inf)
        eq_rows, eq_rhs = [], []
        ub_rows, ub_rhs = [], []

        def shifted(mat, off):
            coo = mat.tocoo()
            return coo.row, coo.col + off, coo.data

        eq_r = ub_r = 0
        eq_data, ub_data = ([], [], []), ([], [], [])
        for t, lay in enumerate(self.layouts):
            off = self.offsets[t]
            slot = self.slots[t]
            c[off : off + lay.n_vars] = lay.run_cost(slot) + lay.routing_cost(slot)
            c[self.rho_offsets[t] : self.rho_offsets[t] + MI] = inst.deploy_cost.reshape(-1)

            a_cap, b_cap = lay.capacity_rows()
            r, cc, d = shifted(a_cap, off)
            ub_data[0].extend(r + ub_r); ub_data[1].extend(cc); ub_data[2].extend(d)
            ub_rhs.extend(b_cap)
            ub_r += a_cap.shape[0]

            a_dem, b_dem, _ = lay.demand_rows()
            r, cc, d = shifted(a_dem, off)
            eq_data[0].extend(r + eq_r); eq_data[1].extend(cc); eq_data[2].extend(d)
            eq_rhs.extend(b_dem)
            eq_r += a_dem.shape[0]

            a_con, b_con, *_ = lay.conservation_rows()
            r, cc, d = shifted(a_con, off)
            eq_data[0].extend(r + eq_r); eq_data[1].extend(cc); eq_data[2].extend(d)
            eq_rhs.extend(b_con)
            eq_r += a_con.shape[0]

            # deployment coupling: q_t - q_{t-1} - rho_t <= 0 (counts start at zero)
            for m in range(M):
                for i in range(I):
                    ub_data[0].append(ub_r); ub_data[1].append(self.q_index(t, m, i)); ub_data[2].append(1.0)
                    if t > 0:
                        ub_data[0].append(ub_r); ub_data[1].append(self.q_index(t - 1, m, i)); ub_data[2].append(-1.0)
                    ub_data[0].append(ub_r); ub_data[1].append(self.rho_offsets[t] + m * I + i); ub_data[2].append(-1.0)
                    ub_rhs.append(0.0)
                    ub_r += 1

            # keep zero-rent counts bounded
            zero_rent = np.argwhere(slot.run_costs <= 0.0)
            if zero_rent.size:
                demand = vnf_demand(inst, self.rates[t])
                for m, i in zero_rent:
                    ub[self.q_index(t, m, i)] = demand[m] / inst.capacity[m, i] + 1.0

        a_eq = sp.csr_matrix((eq_data[2], (eq_data[0], eq_data[1])), shape=(eq_r, self.n_vars))
        a_ub = sp.csr_matrix((ub_data[2], (ub_data[0], ub_data[1])), shape=(ub_r, self.n_vars))
        return LinearProgram(c=c, a_eq=a_eq, b_eq=np.array(eq_rhs), a_ub=a_ub, b_ub=np.array(ub_rhs), lb=lb, ub=ub)

    def unpack(self, x: np.ndarray, integral: bool = False):
        """Split a solution vector into per-slot plans.

        Solver dust (tiny negatives within feasibility tolerance) is clamped;
        anything materially negative aborts.
        """
        if float(x.min(initial=0.0)) < -1e-6:
            raise AssertionError(f"horizon solve returned negative value {x.min()}")
        x = np.maximum(x, 0.0)
        inst = self.inst
        M, I = inst.num_vnfs, inst.num_datacenters
        plans = []
        prev_q = np.zeros((M, I))
        for t, lay in enumerate(self.layouts):
            off = self.offsets[t]
            q, y, xx = lay.unpack(x[off : off + lay.n_vars])
            if integral:
                q_int = np.rint(q).astype(int)
                rho = np.maximum(0, q_int - np.rint(prev_q).astype(int))
                plans.append(IntegerPlan(t=self.slots[t].t, q=q_int, rho=rho, y=y, x=xx))
            else:
                rho = np.maximum(0.0, q - prev_q)
                plans.append(FractionalPlan(t=self.slots[t].t, q=q, rho=rho, y=y, x=xx))
            prev_q = q
        return plans


@dataclass(frozen=True)
class RelaxationResult:
    objective: float
    plans: tuple
    status: str


def solve_relaxation(inst: ProblemInstance, slots) -> RelaxationResult:
    """Optimum of the fractional horizon problem (requires the full horizon)."""
    prog = HorizonProgram(inst, slots)
    res = solve_lp(prog.lp)
    if res.status != OPTIMAL:
        return RelaxationResult(np.nan, (), res.status)
    return RelaxationResult(float(res.objective), tuple(prog.unpack(res.x)), OPTIMAL)


@dataclass(frozen=True)
class ExactResult:
    objective: float
    plans: tuple
    optimal: bool
    gap: float
    nodes: int
    runtime: float
    status: str = OPTIMAL


def solve_exact(
    inst: ProblemInstance,
    slots,
    time_limit: float = 60.0,
    node_limit: int = 100_000,
    int_tol: float = 1e-6,
) -> ExactResult:
    """Exact integer optimum by branch-and-bound on the instance counts.

    Explores nodes best-bound-first (ties broken depth-first, then by
    creation order, so runs are deterministic), branching on the most
    fractional count.  Deployment variables need no branching: at integral
    counts their LP-optimal values are the integral count increases.  When a
    limit is hit the incumbent is returned with its optimality gap.
    """
    prog = HorizonProgram(inst, slots)
    n_q = [(t, m, i) for t in range(len(prog.slots)) for m in range(inst.num_vnfs) for i in range(inst.num_datacenters)]
    started = time.monotonic()

    def solve_node(extra_lb, extra_ub):
        lp = prog.lp
        lb = lp.lb.copy()
        ub = lp.ub.copy()
        for idx, v in extra_lb.items():
            lb[idx] = max(lb[idx], v)
        for idx, v in extra_ub.items():
            ub[idx] = min(ub[idx], v)
        if np.any(lb > ub):
            return None
        node_lp = LinearProgram(lp.c, lp.a_eq, lp.b_eq, lp.a_ub, lp.b_ub, lb, ub)
        res = solve_lp(node_lp)
        return res if res.status == OPTIMAL else None

    root = solve_node({}, {})
    if root is None:
        return ExactResult(np.nan, (), False, np.inf, 1, time.monotonic() - started, INFEASIBLE)

    counter = 0
    heap = [(root.objective, 0, counter, {}, {}, root)]
    best_obj, best_x = np.inf, None
    nodes = 1
    limit_hit = False
    while heap:
        bound, neg_depth, _, lbs, ubs, res = heapq.heappop(heap)
        if bound >= best_obj - 1e-9:
            continue
        if time.monotonic() - started > time_limit or nodes >= node_limit:
            limit_hit = True
            heapq.heappush(heap, (bound, neg_depth, counter, lbs, ubs, res))
            break
        frac_idx, frac_val, worst = -1, 0.0, -1.0
        for t, m, i in n_q:
            idx = prog.q_index(t, m, i)
            v = res.x[idx]
            dist = abs(v - round(v))
            if dist > worst:
                worst, frac_idx, frac_val = dist, idx, v
        if worst <= int_tol:
            if res.objective < best_obj - 1e-12:
                best_obj, best_x = res.objective, res.x
            continue
        floor = math.floor(frac_val)
        for child_lbs, child_ubs in (
            (lbs, {**ubs, frac_idx: float(floor)}),
            ({**lbs, frac_idx: float(floor + 1)}, ubs),
        ):
            child = solve_node(child_lbs, child_ubs)
            nodes += 1
            if child is not None and child.objective < best_obj - 1e-9:
                counter += 1
                heapq.heappush(heap, (child.objective, neg_depth - 1, counter, child_lbs, child_ubs, child))

    lower = min([h[0] for h in heap], default=best_obj)
    lower = min(lower, best_obj)
    gap = 0.0 if not limit_hit and not heap else (best_obj - lower) / max(1e-12, abs(best_obj))
    plans = tuple(prog.unpack(best_x, integral=True)) if best_x is not None else ()
    objective = float(best_obj) if best_x is not None else np.nan
    return ExactResult(objective, plans, not limit_hit, float(max(0.0, gap)), nodes, time.monotonic() - started)


# --- dual certificate -----------------------------------------------------------


@dataclass(frozen=True)
class DualCertificate:
    """Feasible multipliers of the horizon LP dual, built from the online run.

    ``objective`` (the demand constraints' value) lower-bounds the horizon LP
    optimum whenever ``violations`` is empty; the precedence multipliers sit
    between zero and the deploy cost by construction of the regularizer.
    """

    capacity: np.ndarray  # (T, M, I)
    demand: tuple  # per slot: dict flow -> (L,)
    inbound: tuple
    outbound: tuple
    precedence: np.ndarray  # (T, M, I)
    objective: float
    violations: tuple = ()

    @property
    def feasible(self) -> bool:
        return not self.violations


def build_dual_certificate(inst: ProblemInstance, slots, plans, tol: float = 1e-6) -> DualCertificate:
    """Assemble and verify a dual-feasible lower bound from online multipliers.

    Capacity, demand and conservation multipliers are copied from each slot's
    subproblem; the precedence multiplier is the regularizer's remaining
    pull-down potential ``(deploy/eta) * ln((1 + shift) / (prev count +
    shift))``, which telescopes exactly through the subproblems' stationarity
    conditions.  The construction is guaranteed only while counts stay at or
    below one instance; the feasibility check is the arbiter either way, and
    any violations are reported in the result.
    """
    T = len(plans)
    M, I = inst.num_vnfs, inst.num_datacenters
    shift = inst.entropy_shift
    lam = np.zeros((T, M, I))
    nu = np.zeros((T, M, I))
    demand, inbound, outbound = [], [], []
    prev_q = np.zeros((M, I))
    for t, plan in enumerate(plans):
        if plan.duals is None:
            raise ValueError("dual certificate needs plans with recorded multipliers")
        lam[t] = plan.duals.capacity
        nu[t] = (inst.deploy_cost / inst.eta) * np.log((1.0 + shift) / (prev_q + shift))
        demand.append(plan.duals.demand)
        inbound.append(plan.duals.inbound)
        outbound.append(plan.duals.outbound)
        prev_q = plan.q
    objective = 0.0
    for t, slot in enumerate(slots):
        rates = slot_rates(inst, slot)
        for k in rates.active:
            objective += float(rates.f_hat[k] @ demand[t][k])
    cert = DualCertificate(lam, tuple(demand), tuple(inbound), tuple(outbound), nu, objective)
    violations = check_certificate(inst, slots, cert, tol=tol)
    return DualCertificate(lam, tuple(demand), tuple(inbound), tuple(outbound), nu, objective, tuple(violations))


def check_certificate(inst: ProblemInstance, slots, cert: DualCertificate, tol: float = 1e-6) -> list:
    """All dual-feasibility violations beyond ``tol``, with locations."""
    bad = []
    T = len(slots)
    M, I = inst.num_vnfs, inst.num_datacenters
    d_in, d_out = inst.ingress_cost, inst.egress_cost

    if np.any(cert.precedence < -tol):
        bad.append(("precedence-negative", float(cert.precedence.min())))
    over = cert.precedence - inst.deploy_cost[None, :, :]
    if np.any(over > tol):
        bad.append(("precedence-above-deploy", float(over.max())))
    if np.any(cert.capacity < -tol):
        bad.append(("capacity-dual-negative", float(cert.capacity.min())))

    for t, slot in enumerate(slots):
        nu_next = cert.precedence[t + 1] if t + 1 < T else np.zeros((M, I))
        resid = slot.run_costs - inst.capacity * cert.capacity[t] + cert.precedence[t] - nu_next
        if np.any(resid < -tol):
            m, i = np.unravel_index(int(np.argmin(resid)), resid.shape)
            bad.append((f"count-stationarity t={t} m={m} i={i}", float(resid[m, i])))

        rates = slot_rates(inst, slot)
        coeffs = delay_coefficients(inst, slot, rates)
        for k in rates.active:
            chain = inst.chain_of(k)
            L = len(chain)
            mu = cert.demand[t][k]
            gam = cert.inbound[t][k]
            tau = cert.outbound[t][k]
            for pos in range(L):
                m = chain.vnfs[pos]
                expr = (
                    cert.capacity[t][m]
                    + d_in
                    + d_out * chain.beta[pos]
                    + coeffs.endpoint[k][pos]
                    - mu[pos]
                )
                if pos > 0:
                    expr = expr - gam[pos]
                if pos < L - 1:
                    expr = expr + chain.beta[pos] * tau[pos]
                if np.any(expr < -tol):
                    bad.append((f"ingress-stationarity t={t} k={k} pos={pos}", float(expr.min())))
            for pos in range(L - 1):
                expr = coeffs.hop[k][pos] + gam[pos + 1][None, :] - tau[pos][:, None]
                expr[np.diag_indices(I)] -= d_in + d_out
                if np.any(expr < -tol):
                    bad.append((f"hop-stationarity t={t} k={k} hop={pos}", float(expr.min())))
    return bad


def min_positive_deployment(plans, floor: float = 1e-9) -> float:
    """Smallest strictly positive instance count across a trajectory.

    Counts below ``floor`` are treated as zero so floating-point dust cannot
    blow up the reciprocal in the fractional ratio bound.  Returns nan when
    the trajectory never deploys anything.
    """
    smallest = np.inf
    for plan in plans:
        q = np.asarray(plan.q, dtype=float)
        positive = q[q >= floor]
        if positive.size:
            smallest = min(smallest, float(positive.min()))
    return smallest if np.isfinite(smallest) else np.nan


@dataclass(frozen=True)
class RatioReport:
    """Empirical competitive ratios against every available denominator."""

    online_cost: float  # integer-chain total
    fractional_cost: float  # fractional-chain total
    relaxation: float = np.nan
    exact: float = np.nan
    exact_optimal: bool = False
    certificate: float = np.nan
    phi: float = np.nan  # smallest positive fractional count
    ingredients: dict = field(default_factory=dict)

    def _ratio(self, num: float, den: float) -> float:
        if not np.isfinite(den) or den <= 0:
            return np.nan
        return num / den

    @property
    def online_vs_exact(self) -> float:
        return self._ratio(self.online_cost, self.exact)

    @property
    def online_vs_relaxation(self) -> float:
        return self._ratio(self.online_cost, self.relaxation)

    @property
    def online_vs_certificate(self) -> float:
        return self._ratio(self.online_cost, self.certificate)

    @property
    def fractional_vs_relaxation(self) -> float:
        return self._ratio(self.fractional_cost, self.relaxation)

    @property
    def fractional_ratio_bound(self) -> float:
        """Guaranteed ceiling on the fractional ratio: eta + 1 + 1/phi."""
        eta = self.ingredients.get("eta", np.nan)
        if not np.isfinite(self.phi) or self.phi <= 0:
            return np.nan
        return eta + 1.0 + 1.0 / self.phi

    @property
    def integer_ratio_bound(self) -> float:
        return self.ingredients.get("integer_ratio_bound", np.nan)


def compute_ratios(
    online_cost: float,
    fractional_cost: float,
    relaxation: float = np.nan,
    exact: float = np.nan,
    exact_optimal: bool = False,
    certificate: float = np.nan,
    phi: float = np.nan,
    ingredients: dict = None,
) -> RatioReport:
    """Bundle costs and oracle values into a ratio report.

    Ratios with an unavailable or zero denominator come out as nan; the
    certificate denominator is always usable when the certificate verified,
    and upper-bounds the true ratio since it lower-bounds every optimum.
    """
    return RatioReport(
        online_cost=online_cost,
        fractional_cost=fractional_cost,
        relaxation=relaxation,
        exact=exact,
        exact_optimal=exact_optimal,
        certificate=certificate,
        phi=phi,
        ingredients=dict(ingredients or {}),
    )


def write_ratio_csv(path, reports: dict) -> None:
    """Dump named ratio reports, one row per report."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["name", "online_cost", "fractional_cost", "relaxation", "exact", "exact_optimal",
             "certificate", "online_vs_exact", "online_vs_relaxation", "online_vs_certificate",
             "fractional_vs_relaxation", "phi", "fractional_ratio_bound", "integer_ratio_bound"]
        )
        for name, r in reports.items():
            w.writerow(
                [name, r.online_cost, r.fractional_cost, r.relaxation, r.exact, r.exact_optimal,
                 r.certificate, r.online_vs_exact, r.online_vs_relaxation, r.online_vs_certificate,
                 r.fractional_vs_relaxation, r.phi, r.fractional_ratio_bound, r.integer_ratio_bound]
            )


def write_certificate_csv(path, cert: DualCertificate) -> None:
    """Audit dump of the certificate's per-slot multiplier summaries."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "max_capacity_dual", "max_precedence", "objective_share"])
        T = cert.capacity.shape[0]
        for t in range(T):
            share = 0.0
            for k, mu in cert.demand[t].items():
                share += float(np.sum(np.abs(mu)))
            w.writerow([t, float(cert.capacity[t].max(initial=0.0)), float(cert.precedence[t].max(initial=0.0)), share])
        w.writerow(["total", "", "", cert.objective])
        for code, value in cert.violations:
            w.writerow(["violation", code, value, ""])
