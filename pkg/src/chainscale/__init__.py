"""Online scaling of VNF service chains across geo-distributed datacenters.

Library layout:

* ``model`` — static domain types and instance validation
* ``rates`` — rate propagation, delay coefficients, plan costing
* ``solver`` — LP and entropy-regularized solves with dual multipliers
* ``orfa`` — the per-slot regularized fractional planner
* ``clustering`` — median-threshold datacenter clustering
* ``rounding`` — weighted dependent rounding over cluster stars
* ``coa`` — the complete online pipeline with flow redirection
* ``oracle`` — offline LP/MILP optima, dual certificates, ratio reports
* ``workload`` — reproducible synthetic instances and traces
* ``cli`` — the experiment runner
"""

from . import clustering, coa, io, model, oracle, orfa, rates, rounding, solver, workload

__all__ = [
    "clustering",
    "coa",
    "io",
    "model",
    "oracle",
    "orfa",
    "rates",
    "rounding",
    "solver",
    "workload",
]

__version__ = "0.1.0"
