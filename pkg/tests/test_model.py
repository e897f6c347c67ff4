import numpy as np
import pytest

from chainscale.model import (
    Datacenter,
    DelayMatrix,
    estimate_alpha,
    validate_instance,
)
from conftest import build_instance, single_vnf_instance


def brute_force_alpha(d):
    """Independent triple scan: max |d_ab - d_bc| / d_ac over distinct triples."""
    n = d.shape[0]
    worst = 0.0
    for a in range(n):
        for b in range(n):
            for c in range(n):
                if len({a, b, c}) < 3 or d[a, c] == 0:
                    continue
                worst = max(worst, abs(d[a, b] - d[b, c]) / d[a, c])
    return worst


def random_delay_matrix(rng, n):
    pts = rng.uniform(0, 100, size=(n, 2))
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt((diff**2).sum(-1))
    draws = rng.uniform(0.8, 1.2, size=d.shape)
    d *= 0.5 * (draws + draws.T)
    np.fill_diagonal(d, 0.0)
    return d


class TestEstimateAlpha:
    def test_collinear_points_give_exactly_one(self):
        xs = np.array([0.0, 1.0, 3.0, 7.0])
        d = np.abs(xs[:, None] - xs[None, :])
        assert estimate_alpha(d) == pytest.approx(1.0)

    def test_specific_triple_contributes(self):
        # |10 - 2| / 3 = 8/3 from the (a, b, c) triple; oracle confirms the max
        d = np.array([[0, 10, 3], [10, 0, 2], [3, 2, 0]], dtype=float)
        expected = brute_force_alpha(d)
        assert expected >= 8.0 / 3.0 - 1e-12
        assert estimate_alpha(d) == pytest.approx(expected)

    def test_two_nodes_vacuous(self):
        assert estimate_alpha(np.array([[0.0, 4.0], [4.0, 0.0]])) == 0.0

    def test_zero_delay_with_positive_numerator_errors(self):
        d = np.array([[0, 0, 5], [0, 0, 2], [5, 2, 0]], dtype=float)
        with pytest.raises(ValueError):
            estimate_alpha(d)

    def test_returned_alpha_is_minimal(self, rng):
        for _ in range(20):
            d = random_delay_matrix(rng, int(rng.integers(3, 8)))
            alpha = estimate_alpha(d)
            oracle = brute_force_alpha(d)
            assert alpha == pytest.approx(oracle, rel=1e-12)
            if alpha > 0:
                # at alpha - 1e-9 some triple must violate the inequality
                n = d.shape[0]
                shaved = alpha - 1e-9
                violated = any(
                    abs(d[a, b] - d[b, c]) > shaved * d[a, c] + 1e-15
                    for a in range(n)
                    for b in range(n)
                    for c in range(n)
                    if len({a, b, c}) == 3 and d[a, c] > 0
                )
                assert violated

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            estimate_alpha(np.array([[0.0, 1.0], [2.0, 0.0]]))


class TestValidateInstance:
    def test_valid_instance_passes(self, rng):
        inst = single_vnf_instance(rng=rng)
        report = validate_instance(inst)
        assert report.ok, str(report)

    def test_symmetry_violation_flagged(self):
        d = np.array([
            [0, 5, 2, 8],
            [6, 0, 6, 3],
            [2, 6, 0, 9],
            [8, 3, 9, 0],
        ], dtype=float)
        inst = single_vnf_instance(delays=d)
        report = validate_instance(inst)
        assert not report.ok
        assert any(v.code == "symmetry" for v in report.violations)

    def test_alpha_too_small_flagged_with_triple(self):
        d = np.array([[0, 10, 3, 4], [10, 0, 2, 9], [3, 2, 0, 6], [4, 9, 6, 0]], dtype=float)
        inst = single_vnf_instance(delays=d)
        object.__setattr__(inst, "delay", DelayMatrix(d, alpha=1.0))  # too small for this matrix
        report = validate_instance(inst)
        assert not report.ok
        hit = [v for v in report.violations if v.code == "alpha"]
        assert hit and "triple" in hit[0].message

    def test_bad_costs_capacity_and_references(self, rng):
        inst = single_vnf_instance(rng=rng)
        broken = build_instance(
            2,
            vnf_caps=[[10.0, -1.0]],
            deploy_costs=[[1.0, 1.0]],
            chains=[((0, 0), (0.9, 1.0))],  # repeated VNF: not a simple path
            flows=[(0, 1, 5)],  # unknown chain id
            delays=inst.delay.values,
        )
        report = validate_instance(broken)
        codes = {v.code for v in report.violations}
        assert {"capacity", "chain-path", "flow-chain"} <= codes

    def test_negative_transfer_cost_flagged(self, rng):
        inst = single_vnf_instance(rng=rng)
        bad = build_instance(
            2,
            vnf_caps=[[10.0, 10.0]],
            deploy_costs=[[1.0, 1.0]],
            chains=[((0,), (1.0,))],
            flows=[(0, 1, 0)],
            delays=inst.delay.values,
            d_in=[-0.01, 0.01],
        )
        report = validate_instance(bad)
        assert any(v.code == "transfer-cost" for v in report.violations)

    def test_idempotent_and_side_effect_free(self, rng):
        inst = single_vnf_instance(rng=rng)
        before = inst.delay.values.copy()
        r1 = validate_instance(inst)
        r2 = validate_instance(inst)
        assert r1 == r2
        np.testing.assert_array_equal(inst.delay.values, before)


def test_instance_derived_quantities(rng):
    inst = single_vnf_instance(num_dc=2, cap=10.0, rng=rng)
    assert inst.capacity.shape == (1, 2)
    assert inst.eta == pytest.approx(np.log(1 + 2 / 0.1))
    assert inst.entropy_shift == pytest.approx(0.05)
    assert inst.dc_delays().shape == (2, 2)
    # arrays are read-only once constructed
    with pytest.raises(ValueError):
        inst.capacity[0, 0] = 99.0


def test_datacenter_fields():
    d = Datacenter(3, 0.01, 0.02)
    assert (d.node, d.ingress_cost, d.egress_cost) == (3, 0.01, 0.02)
