"""Iterative pipeline, design memory, metrics, and baseline methods."""

import numpy as np
import pytest

from s2c import pipeline
from s2c.model import PlantModel, SpecEntry
from s2c.pipeline import (BASELINE_METHODS, DesignMemory, DesignRecord,
                          PipelineError, RunConfig, compute_metrics, run,
                          run_baseline, select_best, _specs_as_requirement)
from s2c.specint import RequirementText, parse_rules, to_specset
from s2c.synthesis import synthesize
from s2c.verify import McConfig
from tests.conftest import easy_plant, easy_specs

GENEROUS = RequirementText(
    "Overshoot target 60%, low priority; settling time target 15 seconds "
    "with 5s tolerance; H-infinity norm less than 10.")


def make_record(plant, specs, iteration=1):
    cert = synthesize(plant, specs)
    assert cert.status == "success"
    report = pipeline._verify_record(plant, cert, specs, McConfig())
    return DesignRecord(iteration, specs, cert, report)


class TestDesignMemory:
    def test_capacity_evicts_oldest_first(self):
        mem = DesignMemory(capacity=3)
        for i in range(5):
            mem.add(i)
        assert list(mem) == [2, 3, 4] and len(mem) == 3

    def test_indexing(self):
        mem = DesignMemory()
        mem.add("a")
        assert mem[0] == "a"


class TestSelectBest:
    def test_empty_memory_rejected(self):
        with pytest.raises(PipelineError):
            select_best(DesignMemory())

    def test_lexicographic_order(self, plant):
        specs = easy_specs()
        rec1 = make_record(plant, specs, iteration=1)
        # Artificial worse record: one violation.
        from s2c.verify import Violation
        import dataclasses
        worse = dataclasses.replace(
            rec1, iteration=2,
            report=dataclasses.replace(
                rec1.report,
                violations=(Violation("overshoot", 1.0, 0.1, "high"),)))
        mem = DesignMemory()
        mem.add(worse)
        mem.add(rec1)
        assert select_best(mem).iteration == 1

    def test_gamma_breaks_violation_ties(self, plant):
        import dataclasses
        specs = easy_specs()
        rec = make_record(plant, specs)
        cheaper = dataclasses.replace(
            rec, iteration=2,
            certificate=dataclasses.replace(rec.certificate,
                                            gamma=rec.certificate.gamma / 2))
        mem = DesignMemory()
        mem.add(rec)
        mem.add(cheaper)
        assert select_best(mem).iteration == 2


class TestRun:
    def test_converges_on_generous_spec(self, plant):
        result = run(plant, GENEROUS, RunConfig(max_iter=5))
        assert result.converged
        assert result.final_record.report.violations == ()
        assert len(result.floor_trace) == result.iterations_used
        assert len(result.gamma_trace) == result.iterations_used
        assert result.K.shape == (1, 2)

    def test_unsolvable_raises_pipeline_error(self):
        p = PlantModel("hard", A=[[5.0]], B=[[1e-6]], E=[[1.0]],
                       Cz=[[1.0], [0.0]], Dz=[[0.0], [1.0]])
        req = RequirementText("H-infinity norm less than 0.000001; "
                              "settling time target 100 seconds.")
        with pytest.raises(PipelineError):
            run(p, req, RunConfig(max_iter=3))

    def test_discrete_plant_converted(self):
        d = PlantModel("disc", A=[[0.5, 0.1], [0.0, 0.4]], B=[[0.0], [1.0]],
                       E=[[1.0], [0.5]], Cz=[[1.0, 0.0], [0.0, 0.0]],
                       Dz=[[0.0], [1.0]], domain="discrete", Ts=0.1)
        result = run(d, GENEROUS, RunConfig(max_iter=5))
        assert result.converged

    def test_floor_trace_monotone(self, plant):
        # A tight overshoot spec forces adaptation; the recorded floor trace
        # must never decrease.
        req = RequirementText(
            "Overshoot target 0.001%, critical priority with 0 tolerance; "
            "settling time target 15 seconds with 5s tolerance; "
            "H-infinity norm less than 10.")
        osc = PlantModel("osc2", A=[[0.0, 1.0], [-4.0, -0.2]], B=[[0.0], [1.0]],
                         E=[[1.0], [0.0]], Cz=[[1.0, 0.0], [0.0, 0.0]],
                         Dz=[[0.0], [1.0]])
        result = run(osc, req, RunConfig(max_iter=4))
        floors = [f for f in result.floor_trace if f is not None]
        assert all(b >= a - 1e-12 for a, b in zip(floors, floors[1:]))

    def test_deterministic(self, plant):
        r1 = run(plant, GENEROUS, RunConfig(max_iter=5))
        r2 = run(plant, GENEROUS, RunConfig(max_iter=5))
        assert np.array_equal(r1.K, r2.K)
        assert r1.gamma_trace == r2.gamma_trace


class TestComputeMetrics:
    def test_decay_sat_normalized_by_spec_alpha(self, plant):
        # Even a record synthesized with alpha_override=0 reports decay
        # satisfaction against the specification's alpha.
        specs = easy_specs()
        cert = synthesize(plant, specs, alpha_override=0.0)
        report = pipeline._verify_record(plant, cert, specs, McConfig())
        rec = DesignRecord(1, specs, cert, report)
        ms = compute_metrics(rec, specs)
        expected = -cert.closed_loop_spectrum.max_real_part / specs.alpha
        assert ms.decay_sat == pytest.approx(expected)

    def test_failed_record_reports_failure(self, plant):
        from s2c.synthesis import SynthesisCertificate
        rec = DesignRecord(1, easy_specs(),
                           SynthesisCertificate(status="infeasible"), None)
        ms = compute_metrics(rec, easy_specs())
        assert ms.success is False and ms.gamma is None


class TestBaselines:
    def test_unknown_method_rejected(self, plant, specs):
        with pytest.raises(ValueError, match="unknown method"):
            run_baseline(plant, specs, "pid")

    def test_all_methods_succeed_on_easy_plant(self, plant):
        specs = easy_specs()
        for method in BASELINE_METHODS:
            ms = run_baseline(plant, specs, method, RunConfig(max_iter=4))
            assert ms.success, method

    def test_brl_ignores_alpha(self, plant):
        specs = easy_specs(settling_time=SpecEntry(2.0, 0.5, "medium"))
        ms_brl = run_baseline(plant, specs, "brl", RunConfig(max_iter=2))
        ms_alpha = run_baseline(plant, specs, "brl_alpha", RunConfig(max_iter=2))
        # The alpha-constrained design cannot certify a smaller gamma.
        assert ms_brl.gamma <= ms_alpha.gamma + 1e-9

    def test_lqr_h2_has_no_certified_gamma(self, plant, specs):
        ms = run_baseline(plant, specs, "lqr_h2", RunConfig())
        assert ms.success and ms.gamma is None
        assert ms.disturbance_rejection is not None
        assert ms.decay_sat is not None

    def test_specs_round_trip_through_requirement_text(self):
        specs = easy_specs(overshoot=SpecEntry(0.25, 0.05, "high"),
                           decay_rate=0.35)
        doc = parse_rules(_specs_as_requirement(specs))
        recovered = to_specset(doc)
        assert recovered.settling_time.target == specs.settling_time.target
        assert recovered.settling_time.slack == specs.settling_time.slack
        assert recovered.overshoot.target == specs.overshoot.target
        assert recovered.overshoot.priority == specs.overshoot.priority
        assert recovered.hinf.target == specs.hinf.target
        assert recovered.decay_rate == specs.decay_rate
