import pytest

from dglle.verify import (end_to_end_gradient_check, fusion_gradient_check,
                          oracle_equivalence_check)


class TestOracleEquivalence:
    def test_small_batch_passes(self):
        r = oracle_equivalence_check(n_instances=8)
        assert r["passed"], r
        assert r["max_abs_error"] < 1e-12


class TestFusionGradients:
    def test_all_groups_match_fd(self):
        r = fusion_gradient_check()
        assert r["passed"], r
        assert r["max_rel_error"] < 1e-4

    def test_fault_injection_detected(self):
        r = fusion_gradient_check(perturb="w_q")
        assert not r["passed"]
        assert r["worst_group"] == "w_q"


class TestEndToEndGradients:
    def test_all_groups_match_fd(self):
        r = end_to_end_gradient_check()
        assert r["passed"], r
        assert r["max_rel_error"] < 1e-4

    def test_fault_injection_detected(self):
        r = end_to_end_gradient_check(perturb="enh.head.weight",
                                      samples_per_group=5)
        assert not r["passed"]
        assert r["worst_group"] == "enh.head.weight"
