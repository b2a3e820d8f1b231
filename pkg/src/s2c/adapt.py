"""Adapt agent: specification refinement on violations, the gamma-floor
guardrail, and infeasibility relaxation."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

from .llm import LlmUnavailable, NoJsonFound, extract_json
from .model import Priority, SpecEntry, SpecError, SpecSet, priority_rank
from .verify import max_severity

# Severity -> (base-floor fraction of gamma_target, history multiplier).
SEVERITY_TABLE = {
    "low": (0.05, 1.2),
    "medium": (0.10, 2.0),
    "high": (0.20, 5.0),
    "critical": (0.20, 10.0),
}

# Fraction of gamma_target the floor may never exceed.
FLOOR_CAP_FRACTION = 0.9

# Band midpoints for the deterministic refinement rules.
SETTLING_RELAX = 0.175    # relax settling target by 17.5%
OVERSHOOT_TIGHTEN = 0.075  # tighten overshoot target by 7.5%
HINF_TIGHTEN = 0.125       # tighten gamma target by 12.5%
INFEASIBLE_GAMMA_RELAX = 1.25
INFEASIBLE_SLACK_RELAX = 1.5

TIME_DOMAIN_KINDS = ("settling_time", "overshoot")


@dataclass(frozen=True)
class AdaptDecision:
    updated_specs: SpecSet
    gamma_floor_after: float
    rationale: str
    source: str  # "llm" | "heuristic"


def phase_scale(iteration: int) -> float:
    """Adjustment magnitude by iteration phase: gentle early, aggressive late."""
    if iteration <= 3:
        return 0.5
    if iteration <= 7:
        return 1.0
    return 2.0


def update_gamma_floor(specs: SpecSet, violations, gamma_last: float,
                       iteration: int) -> float:
    """Guardrail floor update from time-domain violations.

    The base floor scales with the worst severity; the history floor scales
    the last certified gamma by the severity multiplier and an iteration
    factor 1 + 0.1*min(iteration-1, 5). The result is monotone in the
    current floor and capped at 0.9 * gamma_target.
    """
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    transient = [v for v in violations if v.kind in TIME_DOMAIN_KINDS]
    if not transient:
        raise ValueError("floor updates require time-domain violations")
    gamma_t = specs.hinf.target
    base_frac, mult = SEVERITY_TABLE[max_severity(transient)]
    gamma_base = base_frac * gamma_t
    gamma_hist = gamma_last * mult * (1.0 + 0.1 * min(iteration - 1, 5))
    return min(FLOOR_CAP_FRACTION * gamma_t,
               max(specs.hinf_min, gamma_base, gamma_hist))


def _apply_floor(specs: SpecSet, violations, gamma_last, iteration) -> SpecSet:
    if any(v.kind in TIME_DOMAIN_KINDS for v in violations) and gamma_last is not None:
        return specs.with_floor(
            update_gamma_floor(specs, violations, gamma_last, iteration))
    return specs


def refine_heuristic(specs: SpecSet, violations, iteration: int,
                     gamma_last: float = None) -> AdaptDecision:
    """Deterministic refinement rules, magnitudes scaled by iteration phase.

    Overshoot violations trade speed for damping (relax settling, tighten
    overshoot); certified-norm violations tighten the gamma target but never
    below what the current floor allows. The guardrail floor update always
    runs afterwards when transient violations are present.
    """
    if not violations:
        raise ValueError("refine_heuristic requires at least one violation")
    scale = phase_scale(iteration)
    kinds = {v.kind for v in violations}
    notes = []
    st, ov, hf = specs.settling_time, specs.overshoot, specs.hinf
    if "overshoot" in kinds:
        st = replace(st, target=st.target * (1.0 + SETTLING_RELAX * scale))
        ov = replace(ov, target=ov.target * (1.0 - OVERSHOOT_TIGHTEN * scale))
        notes.append("overshoot violated: relaxed settling target, tightened overshoot")
    if "hinf" in kinds:
        new_target = hf.target * (1.0 - HINF_TIGHTEN * scale)
        new_target = max(new_target, specs.hinf_min / FLOOR_CAP_FRACTION)
        hf = replace(hf, target=new_target)
        notes.append("certified norm violated: tightened gamma target")
    updated = replace(specs, settling_time=st, overshoot=ov, hinf=hf)
    updated = _apply_floor(updated, violations, gamma_last, iteration)
    return AdaptDecision(
        updated_specs=updated,
        gamma_floor_after=updated.hinf_min,
        rationale="; ".join(notes) or "no applicable rule",
        source="heuristic",
    )


def relax_on_infeasible(specs: SpecSet) -> SpecSet:
    """Relaxation after an infeasible synthesis: widen the gamma target,
    loosen the lowest-priority time-domain slack, re-cap the floor."""
    hf = replace(specs.hinf, target=specs.hinf.target * INFEASIBLE_GAMMA_RELAX)
    st, ov = specs.settling_time, specs.overshoot
    if priority_rank(ov.priority) <= priority_rank(st.priority):
        ov = replace(ov, slack=ov.slack * INFEASIBLE_SLACK_RELAX)
    else:
        st = replace(st, slack=st.slack * INFEASIBLE_SLACK_RELAX)
    floor = min(specs.hinf_min, FLOOR_CAP_FRACTION * hf.target)
    return replace(specs, hinf=hf, settling_time=st, overshoot=ov, hinf_min=floor)


def adapt_system_prompt() -> str:
    return resources.files("s2c").joinpath("prompts/adapt_system.txt").read_text()


def _violations_digest(violations) -> str:
    return json.dumps([
        {"kind": v.kind, "measured": v.measured, "target": v.target,
         "severity": v.severity}
        for v in violations
    ])


def _memory_digest(memory, last_k: int = 3) -> str:
    if memory is None:
        return "[]"
    rows = []
    for rec in list(memory)[-last_k:]:
        rows.append({
            "iteration": rec.iteration,
            "gamma": rec.certificate.gamma,
            "violations": len(rec.report.violations),
        })
    return json.dumps(rows)


def _entry_update(entry: SpecEntry, update: dict) -> SpecEntry:
    if not isinstance(update, dict):
        raise SpecError("spec update must be an object")
    fields = {}
    for key in ("target", "slack"):
        if key in update:
            fields[key] = float(update[key])
    if "priority" in update:
        fields["priority"] = Priority(update["priority"])
    return replace(entry, **fields)


def refine_llm(specs: SpecSet, violations, memory, iteration: int, client,
               gamma_last: float = None) -> AdaptDecision:
    """LLM-guided refinement with the heuristic as a total fallback.

    Accepted updates are re-validated against every SpecSet invariant and
    the monotone-floor rule; anything invalid falls back to the heuristic.
    The guardrail floor update is applied unconditionally afterwards — it is
    never delegated to the model.
    """
    try:
        user = (
            f"Current specifications: {json.dumps(_specs_digest(specs))}\n"
            f"Violations: {_violations_digest(violations)}\n"
            f"Iteration: {iteration}\n"
            f"Recent designs: {_memory_digest(memory)}\n"
            'Reply with a JSON object {"updates": {...}}.'
        )
        reply = client.complete(adapt_system_prompt(), user)
        doc = extract_json(reply)
        updates = doc.get("updates")
        if not isinstance(updates, dict) or not updates:
            raise SpecError("reply carries no updates object")
        hf, st, ov = specs.hinf, specs.settling_time, specs.overshoot
        floor = specs.hinf_min
        decay = specs.decay_rate
        for key, update in updates.items():
            if key == "h_infinity_norm":
                if isinstance(update, dict) and "min" in update:
                    new_floor = float(update["min"])
                    if new_floor < floor:
                        raise SpecError("floor decrease rejected (monotone rule)")
                    floor = new_floor
                hf = _entry_update(hf, {k: v for k, v in update.items() if k != "min"}
                                   if isinstance(update, dict) else update)
            elif key == "settling_time":
                st = _entry_update(st, update)
            elif key == "overshoot":
                ov = _entry_update(ov, update)
            elif key == "decay_rate":
                decay = float(update["target"] if isinstance(update, dict) else update)
        updated = SpecSet(hinf=hf, settling_time=st, overshoot=ov,
                          hinf_min=min(floor, FLOOR_CAP_FRACTION * hf.target),
                          decay_rate=decay)
        if updated.hinf_min < specs.hinf_min - 1e-12:
            raise SpecError("floor decrease rejected (monotone rule)")
        updated = _apply_floor(updated, violations, gamma_last, iteration)
        return AdaptDecision(
            updated_specs=updated,
            gamma_floor_after=updated.hinf_min,
            rationale=str(doc.get("strategy", doc.get("diagnosis", "llm update"))),
            source="llm",
        )
    except (LlmUnavailable, NoJsonFound, SpecError, ValueError, TypeError, KeyError):
        return refine_heuristic(specs, violations, iteration, gamma_last=gamma_last)


def _specs_digest(specs: SpecSet) -> dict:
    return {
        "h_infinity_norm": {"target": specs.hinf.target, "slack": specs.hinf.slack,
                            "priority": specs.hinf.priority.value,
                            "min": specs.hinf_min},
        "settling_time": {"target": specs.settling_time.target,
                          "slack": specs.settling_time.slack,
                          "priority": specs.settling_time.priority.value},
        "overshoot": {"target": specs.overshoot.target,
                      "slack": specs.overshoot.slack,
                      "priority": specs.overshoot.priority.value},
        "decay_rate": specs.decay_rate,
    }
