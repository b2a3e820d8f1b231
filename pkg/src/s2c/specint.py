"""SpecInt agent: deterministic rule-based extraction of specifications from
natural-language requirement text, optional LLM assistance, and schema
validation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .llm import LlmUnavailable, NoJsonFound, extract_json
from .model import PlantModel, SpecEntry, SpecError, SpecSet

SPEC_KEYS = ("h_infinity_norm", "settling_time", "overshoot")

# Default entries used for specs the text never mentions.
DEFAULTS = {
    "h_infinity_norm": {"target": 10.0, "slack": 1.0, "priority": "medium"},
    "settling_time": {"target": 5.0, "slack": 1.0, "priority": "medium"},
    "overshoot": {"target": 0.20, "slack": 0.05, "priority": "low"},
}

# Qualitative vocabulary mapped to range midpoints.
QUALITATIVE = {
    "settling_time": (re.compile(r"\bfast\b"), 2.5),
    "overshoot": (re.compile(r"\bsmooth\b"), 0.075),
    "h_infinity_norm": (re.compile(r"\bstrongly\s+reject\b"), 1.75),
}

_KEYWORDS = {
    "settling_time": [r"settling"],
    "overshoot": [r"overshoot"],
    "h_infinity_norm": [r"h[\s_-]?infinity", r"\bhinf\b", r"disturbance\s+rejection",
                        r"\bgamma\b"],
    "decay_rate": [r"decay", r"\balpha\b", "α"],
}

_NUMBER_RE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?)(\s*%)?")
_PRIORITY_RE = re.compile(
    r"(critical|high|medium|low)\s+priority|priority\s*[:=]?\s*(critical|high|medium|low)"
)
_TOLERANCE_CTX = re.compile(r"tolerance|slack|±|\+/-")
_SEGMENT_RE = re.compile(r"(?<=[;.!?])\s+")


@dataclass(frozen=True)
class RequirementText:
    text: str
    source: str = "user"

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise SpecError("requirement text must be non-empty")
        if self.source not in ("user", "fixture"):
            raise SpecError(f"unknown requirement source {self.source!r}")


def _keyword_positions(segment: str):
    hits = []
    for key, patterns in _KEYWORDS.items():
        for pat in patterns:
            for m in re.finditer(pat, segment):
                hits.append((m.start(), key))
    return hits


def _nearest_key(hits, pos: int):
    if not hits:
        return None
    return min(hits, key=lambda h: abs(h[0] - pos))[1]


def _derived_slack(key: str, target: float) -> float:
    """Slack when the text gives none: proportional for the scaled specs,
    a fixed band for overshoot fractions."""
    if key == "h_infinity_norm":
        return 0.1 * target
    if key == "settling_time":
        return 0.2 * target
    return 0.05


def parse_rules(req: RequirementText) -> dict:
    """Extract a specification document from requirement text, deterministically.

    Explicit numbers bind to the nearest spec keyword within their sentence;
    numbers in a tolerance context become slack; qualitative vocabulary fills
    specs with range midpoints when no number names them. Priority: an
    explicit "<level> priority" phrase wins, else a stated tolerance implies
    medium, else an explicit number implies high, else the default. The
    result is always schema-valid; text with no recognizable content yields
    pure defaults plus a warning flag.
    """
    text = req.text.lower()
    targets: dict = {}
    slacks: dict = {}
    priorities: dict = {}

    for segment in _SEGMENT_RE.split(text):
        hits = _keyword_positions(segment)
        if not hits:
            continue
        for m in _NUMBER_RE.finditer(segment):
            key = _nearest_key(hits, m.start(1))
            value = float(m.group(1))
            if m.group(2) or (key == "overshoot" and value > 1.0):
                value /= 100.0
            ctx = segment[max(0, m.start() - 24):m.end() + 16]
            if _TOLERANCE_CTX.search(ctx):
                slacks.setdefault(key, value)
            else:
                targets.setdefault(key, value)
        for m in _PRIORITY_RE.finditer(segment):
            level = m.group(1) or m.group(2)
            key = _nearest_key(hits, m.start())
            priorities.setdefault(key, level)

    warnings = []
    for key, (pattern, midpoint) in QUALITATIVE.items():
        if key not in targets and pattern.search(text):
            targets[key] = midpoint

    doc: dict = {}
    for key in SPEC_KEYS:
        default = DEFAULTS[key]
        explicit = key in targets
        target = targets.get(key, default["target"])
        has_slack = key in slacks
        slack = slacks[key] if has_slack else (
            _derived_slack(key, target) if explicit else default["slack"]
        )
        if key in priorities:
            priority = priorities[key]
        elif has_slack:
            priority = "medium"
        elif explicit:
            priority = "high"
        else:
            priority = default["priority"]
        doc[key] = {"target": target, "priority": priority, "slack": slack}
    if "decay_rate" in targets:
        doc["decay_rate"] = {
            "target": targets["decay_rate"],
            "priority": priorities.get("decay_rate", "medium"),
        }
    if not targets and not slacks:
        warnings.append("no recognizable specifications; using defaults")
    if warnings:
        doc["warnings"] = warnings
    return validate_spec_json(doc)


def validate_spec_json(doc) -> dict:
    """Validate and normalize a specification document.

    Requires the h_infinity_norm entry; fills missing time-domain entries
    with defaults; checks finiteness, ranges, and priority levels. Returns
    the normalized document or raises SpecError.
    """
    if not isinstance(doc, dict):
        raise SpecError("specification document must be a JSON object")
    if "h_infinity_norm" not in doc:
        raise SpecError("h_infinity_norm entry is required")
    out: dict = {}
    for key in SPEC_KEYS:
        entry = doc.get(key, dict(DEFAULTS[key]))
        if not isinstance(entry, dict) or "target" not in entry:
            raise SpecError(f"{key} entry must be an object with a target")
        try:
            target = float(entry["target"])
            slack = float(entry.get("slack", _derived_slack(key, target)))
        except (TypeError, ValueError) as exc:
            raise SpecError(f"{key} has non-numeric fields: {exc}") from None
        if not (math.isfinite(target) and math.isfinite(slack)):
            raise SpecError(f"{key} fields must be finite")
        if key == "overshoot":
            if not (0 <= target < 1):
                raise SpecError("overshoot target must lie in [0, 1)")
        elif target <= 0:
            raise SpecError(f"{key} target must be positive")
        if slack < 0:
            raise SpecError(f"{key} slack must be nonnegative")
        priority = entry.get("priority", DEFAULTS[key]["priority"])
        if priority not in ("low", "medium", "high", "critical"):
            raise SpecError(f"{key} priority {priority!r} not a valid level")
        out[key] = {"target": target, "priority": priority, "slack": slack}
    if "decay_rate" in doc:
        entry = doc["decay_rate"]
        if isinstance(entry, dict):
            raw = entry.get("target")
            priority = entry.get("priority", "medium")
        else:
            raw, priority = entry, "medium"
        try:
            rate = float(raw)
        except (TypeError, ValueError):
            raise SpecError("decay_rate must be numeric") from None
        if not (math.isfinite(rate) and rate >= 0):
            raise SpecError("decay_rate must be finite and nonnegative")
        if priority not in ("low", "medium", "high", "critical"):
            raise SpecError(f"decay_rate priority {priority!r} not a valid level")
        out["decay_rate"] = {"target": rate, "priority": priority}
    if "warnings" in doc:
        out["warnings"] = list(doc["warnings"])
    return out


def specint_system_prompt() -> str:
    return resources.files("s2c").joinpath("prompts/specint_system.txt").read_text()


def parse_llm(req: RequirementText, client) -> dict:
    """LLM-assisted extraction with the rule parser as a total fallback.

    Any transport failure, malformed reply, or schema violation falls back
    to parse_rules output with the fallback flag set; this function never
    raises on bad model behavior.
    """
    try:
        reply = client.complete(specint_system_prompt(), req.text)
        doc = validate_spec_json(extract_json(reply))
        doc["fallback"] = False
        return doc
    except (LlmUnavailable, NoJsonFound, SpecError):
        doc = parse_rules(req)
        doc["fallback"] = True
        return doc


def to_specset(j: dict, plant: PlantModel = None) -> SpecSet:
    """Build a SpecSet (gamma floor initialized to zero) from a validated
    specification document."""
    j = validate_spec_json(j)

    def entry(key):
        e = j[key]
        return SpecEntry(target=e["target"], slack=e["slack"], priority=e["priority"])

    decay = j["decay_rate"]["target"] if "decay_rate" in j else None
    return SpecSet(
        hinf=entry("h_infinity_norm"),
        settling_time=entry("settling_time"),
        overshoot=entry("overshoot"),
        hinf_min=0.0,
        decay_rate=decay,
    )
