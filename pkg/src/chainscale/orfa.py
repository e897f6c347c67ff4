"""Per-slot fractional planning via entropy regularization.

Instead of charging deployments directly (which couples consecutive slots),
each slot solves a convex subproblem whose objective adds, per VNF and
datacenter, a shifted relative-entropy penalty pulling the new instance count
toward the previous one.  The resulting per-slot optima, stitched together,
form a feasible fractional trajectory for the full horizon problem, and their
dual multipliers later feed the offline lower-bound certificate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .layout import SlotLayout
from .model import ProblemInstance, SlotInput
from .rates import RateProfile, slot_rates, vnf_demand
from .solver import (
    OPTIMAL,
    EntropyRegularizedProgram,
    LinearProgram,
    SolveResult,
    solve_entropy,
)

__all__ = ["FractionalPlan", "SlotDuals", "build_subproblem", "orfa_step", "run_orfa", "write_plan_csv"]

#: counts below this, carrying below-this load, are interior-point dust
Q_FLOOR = 1e-7


@dataclass(frozen=True)
class SlotDuals:
    """Multipliers of one slot's subproblem, oriented for the offline dual.

    ``capacity[m, i] >= 0`` prices processing capacity; ``demand[k][pos]``
    prices the arrival-rate constraint; ``inbound[k][pos, i]`` /
    ``outbound[k][pos, i]`` price flow conservation (rows for the first /
    last position are unused and left at zero).
    """

    capacity: np.ndarray
    demand: dict
    inbound: dict
    outbound: dict


@dataclass(frozen=True)
class FractionalPlan:
    """One slot's fractional decisions plus solver diagnostics."""

    t: int
    q: np.ndarray  # (M, I) instance counts
    rho: np.ndarray  # (M, I) newly deployed instances, max(0, q - prev_q)
    y: dict  # flow id -> (L, I) traffic entering each position
    x: dict  # flow id -> (L-1, I, I) hop traffic
    duals: SlotDuals = None
    objective: float = np.nan  # subproblem objective (includes the regularizer)
    kkt: dict = field(default_factory=dict)


def build_subproblem(
    inst: ProblemInstance,
    slot: SlotInput,
    prev_q: np.ndarray,
    rates: RateProfile = None,
):
    """Assemble the regularized slot subproblem.

    Objective: rent + transfer + delay over this slot's routing, plus
    ``(deploy_cost / eta)`` times the shifted relative entropy between the new
    and previous instance counts (shift ``epsilon / (M*I)``).  Subject to
    capacity, arrival-rate and conservation constraints with everything
    nonnegative.  Instance counts have no natural upper bound; a demand-based
    cap is added only where the rent is zero, to keep the program bounded
    without touching any multiplier used downstream.

    Returns ``(program, layout)``.
    """
    if rates is None:
        rates = slot_rates(inst, slot)
    _check_slot(inst, slot)
    layout = SlotLayout(inst, rates, with_q=True)
    a_cap, b_cap = layout.capacity_rows()
    a_dem, b_dem, _ = layout.demand_rows()
    a_con, b_con, _, _, _ = layout.conservation_rows()

    ub_blocks, ub_rhs = [a_cap], [b_cap]
    zero_rent = np.argwhere(slot.run_costs <= 0.0)
    if zero_rent.size:
        demand = vnf_demand(inst, rates)
        rows, cols, vals, rhs = [], [], [], []
        for r, (m, i) in enumerate(zero_rent):
            rows.append(r)
            cols.append(layout.q_idx(m, i))
            vals.append(1.0)
            rhs.append(demand[m] / inst.capacity[m, i] + 1.0)
        ub_blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), layout.n_vars)))
        ub_rhs.append(np.array(rhs))

    c = layout.run_cost(slot) + layout.routing_cost(slot)
    lp = LinearProgram(
        c=c,
        a_eq=sp.vstack([a_dem, a_con]).tocsr(),
        b_eq=np.concatenate([b_dem, b_con]),
        a_ub=sp.vstack(ub_blocks).tocsr(),
        b_ub=np.concatenate(ub_rhs),
    )
    weight = np.zeros(layout.n_vars)
    reference = np.zeros(layout.n_vars)
    shift = np.ones(layout.n_vars)
    weight[: layout.num_q] = (inst.deploy_cost / inst.eta).reshape(-1)
    reference[: layout.num_q] = np.asarray(prev_q, dtype=float).reshape(-1)
    shift[: layout.num_q] = inst.entropy_shift
    return EntropyRegularizedProgram(lp, weight, reference, shift), layout


def _check_slot(inst: ProblemInstance, slot: SlotInput) -> None:
    if slot.rates.shape != (inst.num_flows,):
        raise ValueError("slot rates shape does not match flow count")
    if slot.run_costs.shape != (inst.num_vnfs, inst.num_datacenters):
        raise ValueError("slot run costs shape does not match (VNFs, datacenters)")
    if np.any(slot.rates < 0) or np.any(slot.delay_weights < 0) or np.any(slot.run_costs < 0):
        raise ValueError("slot observables must be nonnegative")


def _interior_start(layout: SlotLayout) -> np.ndarray:
    inst = layout.inst
    v = layout.spread_evenly()
    I = inst.num_datacenters
    load = np.zeros((inst.num_vnfs, I))
    for k in layout.rates.active:
        chain = layout.chain[k]
        for pos, m in enumerate(chain.vnfs):
            o = layout.y_idx(k, pos, 0)
            load[m] += v[o : o + I]
    v[: layout.num_q] = (load / inst.capacity + 0.9).reshape(-1)
    return v


def _extract_duals(layout: SlotLayout, result: SolveResult) -> SlotDuals:
    """Map solver multipliers onto the capacity/demand/conservation families.

    The demand and inbound rows were written as "supply minus requirement",
    so their multipliers flip sign to price the requirement itself; outbound
    rows already carry the right orientation.
    """
    inst = layout.inst
    I, M = inst.num_datacenters, inst.num_vnfs
    cap = result.ub_duals[: M * I].reshape(M, I).copy()
    a_dem, _, dem_index = layout.demand_rows()
    n_dem = a_dem.shape[0]
    _, _, idx_in, idx_out, first_out = layout.conservation_rows()

    demand, inbound, outbound = {}, {}, {}
    for k in layout.rates.active:
        L = len(layout.chain[k])
        demand[k] = np.zeros(L)
        inbound[k] = np.zeros((L, I))
        outbound[k] = np.zeros((L, I))
    # equality rows were stacked demand-first, then inbound, then outbound
    for r, (k, pos) in enumerate(dem_index):
        demand[k][pos] = -result.eq_duals[r]
    for r, (k, pos, i) in enumerate(idx_in):
        inbound[k][pos, i] = -result.eq_duals[n_dem + r]
    for r, (k, pos, i) in enumerate(idx_out):
        outbound[k][pos, i] = result.eq_duals[n_dem + first_out + r]
    return SlotDuals(cap, demand, inbound, outbound)


def orfa_step(
    inst: ProblemInstance,
    slot: SlotInput,
    prev_q: np.ndarray,
    rates: RateProfile = None,
    tol: float = 1e-8,
) -> FractionalPlan:
    """Solve one slot's regularized subproblem.

    Returns the optimal fractional plan; newly deployed counts are the
    positive part of the change from ``prev_q``.  A valid instance always
    admits a solution (instance counts are unbounded above), so an infeasible
    status indicates corrupt input and raises.
    """
    if rates is None:
        rates = slot_rates(inst, slot)
    prog, layout = build_subproblem(inst, slot, prev_q, rates)
    result = solve_entropy(prog, tol=tol, x0=_interior_start(layout))
    if result.status != OPTIMAL:
        raise RuntimeError(f"slot {slot.t}: subproblem solve failed with status {result.status}")
    q, y, x = layout.unpack(result.x)
    # clear interior-point dust: counts carrying only dust-sized load are zero
    load = np.zeros_like(q)
    for k in rates.active:
        chain = layout.chain[k]
        for pos, m in enumerate(chain.vnfs):
            load[m] += y[k][pos]
    q[(q < Q_FLOOR) & (load <= Q_FLOOR)] = 0.0
    rho = np.maximum(0.0, q - np.asarray(prev_q, dtype=float))
    return FractionalPlan(
        t=slot.t,
        q=q,
        rho=rho,
        y=y,
        x=x,
        duals=_extract_duals(layout, result),
        objective=result.objective,
        kkt=result.kkt,
    )


def run_orfa(inst: ProblemInstance, slots, tol: float = 1e-8) -> list:
    """Process the slot stream online, chaining each slot's counts into the next.

    Slots are consumed strictly in order and nothing from a later slot can
    influence an earlier decision.
    """
    prev_q = np.zeros((inst.num_vnfs, inst.num_datacenters))
    plans = []
    for slot in slots:
        plan = orfa_step(inst, slot, prev_q, tol=tol)
        plans.append(plan)
        prev_q = plan.q
    return plans


def write_plan_csv(path, plans) -> None:
    """Dump nonzero plan variables, one row per variable."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "kind", "flow", "vnf_pos", "from_dc", "to_dc", "value"])
        for plan in plans:
            for (m, i), val in np.ndenumerate(plan.q):
                if val > 0:
                    w.writerow([plan.t, "q", "", m, i, "", f"{val:.12g}"])
            for k, y in sorted(plan.y.items()):
                for (pos, i), val in np.ndenumerate(y):
                    if val > 0:
                        w.writerow([plan.t, "y", k, pos, i, "", f"{val:.12g}"])
            for k, x in sorted(plan.x.items()):
                for (hop, i, j), val in np.ndenumerate(x):
                    if val > 0:
                        w.writerow([plan.t, "x", k, hop, i, j, f"{val:.12g}"])
