"""Adaptation rules, the gamma-floor guardrail, and LLM-guided refinement."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2c import adapt
from s2c.model import SpecEntry, SpecSet
from s2c.verify import Violation
from tests.conftest import easy_specs


def tviol(kind="overshoot", severity="medium", measured=1.0, target=0.5):
    return Violation(kind=kind, measured=measured, target=target,
                     severity=severity)


class TestGammaFloor:
    def test_showcase_activation_value(self):
        # gamma_target 20, floor 0, last gamma 14.64, critical, iteration 1:
        # the history floor saturates at the 90% cap -> exactly 18.0.
        specs = easy_specs(hinf=SpecEntry(20.0, 2.0, "high"))
        floor = adapt.update_gamma_floor(
            specs, [tviol(severity="critical")], gamma_last=14.64, iteration=1)
        assert floor == 18.0

    def test_base_floor_by_severity(self):
        specs = easy_specs(hinf=SpecEntry(100.0, 1.0, "medium"))
        for severity, frac in (("low", 0.05), ("medium", 0.10),
                               ("high", 0.20), ("critical", 0.20)):
            floor = adapt.update_gamma_floor(
                specs, [tviol(severity=severity)], gamma_last=1e-9, iteration=1)
            assert floor == pytest.approx(frac * 100.0)

    def test_history_floor_formula(self):
        # Low severity keeps the base floor at 5, so the history term
        # 10 * 1.2 * (1 + 0.1 * 2) = 14.4 governs.
        specs = easy_specs(hinf=SpecEntry(100.0, 1.0, "medium"))
        floor = adapt.update_gamma_floor(
            specs, [tviol(severity="low")], gamma_last=10.0, iteration=3)
        assert floor == pytest.approx(14.4)

    def test_iteration_factor_saturates_at_six(self):
        specs = easy_specs(hinf=SpecEntry(100.0, 1.0, "medium"))
        f6 = adapt.update_gamma_floor(specs, [tviol(severity="low")], 10.0,
                                      iteration=6)
        f7 = adapt.update_gamma_floor(specs, [tviol(severity="low")], 10.0,
                                      iteration=7)
        assert f6 == f7 == pytest.approx(10.0 * 1.2 * 1.5)

    def test_monotone_in_current_floor(self):
        specs = easy_specs().with_floor(8.0)
        floor = adapt.update_gamma_floor(specs, [tviol(severity="low")],
                                         gamma_last=0.01, iteration=1)
        assert floor >= 8.0

    def test_capped_at_ninety_percent(self):
        specs = easy_specs()
        floor = adapt.update_gamma_floor(specs, [tviol(severity="critical")],
                                         gamma_last=1e6, iteration=9)
        assert floor == pytest.approx(0.9 * specs.hinf.target)

    def test_requires_time_domain_violation(self):
        with pytest.raises(ValueError, match="time-domain"):
            adapt.update_gamma_floor(easy_specs(), [tviol(kind="hinf")], 1.0, 1)

    def test_requires_positive_iteration(self):
        with pytest.raises(ValueError, match="iteration"):
            adapt.update_gamma_floor(easy_specs(), [tviol()], 1.0, 0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(
        st.sampled_from(["low", "medium", "high", "critical"]),
        st.floats(min_value=1e-3, max_value=50.0),
        st.integers(min_value=1, max_value=12)), min_size=1, max_size=12))
    def test_floor_never_decreases_along_any_sequence(self, steps):
        specs = easy_specs(hinf=SpecEntry(100.0, 1.0, "medium"))
        floor = 0.0
        for severity, gamma_last, iteration in steps:
            new = adapt.update_gamma_floor(
                specs.with_floor(floor), [tviol(severity=severity)],
                gamma_last, iteration)
            assert new >= floor - 1e-12
            assert new <= 0.9 * 100.0 + 1e-12
            floor = new


class TestPhaseScale:
    def test_phases(self):
        assert [adapt.phase_scale(i) for i in (1, 3, 4, 7, 8, 20)] == \
            [0.5, 0.5, 1.0, 1.0, 2.0, 2.0]


class TestRefineHeuristic:
    def test_overshoot_rule_early_phase(self):
        specs = easy_specs()
        d = adapt.refine_heuristic(specs, [tviol(kind="overshoot")], 1)
        u = d.updated_specs
        assert u.settling_time.target == pytest.approx(10.0 * 1.0875)
        assert u.overshoot.target == pytest.approx(0.5 * 0.9625)
        assert d.source == "heuristic"

    def test_hinf_rule_tightens_target(self):
        specs = easy_specs()
        d = adapt.refine_heuristic(specs, [tviol(kind="hinf")], 5)
        assert d.updated_specs.hinf.target == pytest.approx(10.0 * 0.875)

    def test_hinf_tightening_respects_floor(self):
        specs = easy_specs().with_floor(9.0)
        d = adapt.refine_heuristic(specs, [tviol(kind="hinf")], 9)
        assert d.updated_specs.hinf.target >= 9.0 / 0.9 - 1e-12

    def test_floor_applied_after_rules(self):
        specs = easy_specs()
        d = adapt.refine_heuristic(specs, [tviol(severity="high")], 2,
                                   gamma_last=2.0)
        expected = adapt.update_gamma_floor(
            d.updated_specs.with_floor(0.0), [tviol(severity="high")], 2.0, 2)
        assert d.gamma_floor_after == pytest.approx(expected)

    def test_no_violations_rejected(self):
        with pytest.raises(ValueError):
            adapt.refine_heuristic(easy_specs(), [], 1)


class TestRelaxOnInfeasible:
    def test_gamma_target_widened(self):
        relaxed = adapt.relax_on_infeasible(easy_specs())
        assert relaxed.hinf.target == pytest.approx(12.5)

    def test_lowest_priority_slack_loosened(self):
        specs = easy_specs(settling_time=SpecEntry(10.0, 2.0, "low"),
                           overshoot=SpecEntry(0.2, 0.05, "high"))
        relaxed = adapt.relax_on_infeasible(specs)
        assert relaxed.settling_time.slack == pytest.approx(3.0)
        assert relaxed.overshoot.slack == pytest.approx(0.05)

    def test_priority_tie_prefers_overshoot(self):
        specs = easy_specs(settling_time=SpecEntry(10.0, 2.0, "medium"),
                           overshoot=SpecEntry(0.2, 0.05, "medium"))
        relaxed = adapt.relax_on_infeasible(specs)
        assert relaxed.overshoot.slack == pytest.approx(0.075)
        assert relaxed.settling_time.slack == pytest.approx(2.0)

    def test_floor_stays_valid(self):
        specs = easy_specs().with_floor(5.0)
        relaxed = adapt.relax_on_infeasible(specs)
        assert relaxed.hinf_min <= 0.9 * relaxed.hinf.target


class FakeClient:
    def __init__(self, reply):
        self.reply = reply

    def complete(self, system, user):
        return self.reply


class TestRefineLlm:
    def test_valid_update_applied(self):
        d = adapt.refine_llm(
            easy_specs(), [tviol()], None, 1,
            FakeClient('{"updates": {"settling_time": {"target": 12.0}}, '
                       '"strategy": "relax settling"}'),
            gamma_last=2.0)
        assert d.source == "llm"
        assert d.updated_specs.settling_time.target == 12.0
        assert d.rationale == "relax settling"

    def test_guardrail_always_applied_after_llm(self):
        d = adapt.refine_llm(
            easy_specs(), [tviol(severity="critical")], None, 1,
            FakeClient('{"updates": {"settling_time": {"target": 12.0}}}'),
            gamma_last=5.0)
        assert d.gamma_floor_after == pytest.approx(0.9 * 10.0)

    def test_floor_decrease_rejected_falls_back(self):
        specs = easy_specs().with_floor(6.0)
        d = adapt.refine_llm(
            specs, [tviol()], None, 1,
            FakeClient('{"updates": {"h_infinity_norm": {"min": 1.0}}}'),
            gamma_last=2.0)
        assert d.source == "heuristic"
        assert d.updated_specs.hinf_min >= 6.0

    def test_malformed_reply_falls_back(self):
        d = adapt.refine_llm(easy_specs(), [tviol()], None, 1,
                             FakeClient("no json here"), gamma_last=2.0)
        assert d.source == "heuristic"

    def test_invariant_violating_update_falls_back(self):
        d = adapt.refine_llm(
            easy_specs(), [tviol()], None, 1,
            FakeClient('{"updates": {"overshoot": {"target": 3.0}}}'),
            gamma_last=2.0)
        assert d.source == "heuristic"
        assert 0 <= d.updated_specs.overshoot.target < 1

    def test_empty_updates_falls_back(self):
        d = adapt.refine_llm(easy_specs(), [tviol()], None, 1,
                             FakeClient('{"updates": {}}'), gamma_last=2.0)
        assert d.source == "heuristic"

    def test_system_prompt_asset_loads(self):
        assert adapt.adapt_system_prompt().strip()
