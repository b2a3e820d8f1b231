"""Tester agent: Monte Carlo time-domain simulation, the frequency-domain
branch, and violation classification against a SpecSet."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import FreqMetrics, expm, hinf_norm, loop_margins
from .model import PlantModel, Priority, SpecSet

# State-norm threshold above which a trial counts as diverged.
DIVERGENCE_NORM = 1e6
# Settling band as a fraction of the peak state norm (2% criterion).
SETTLING_BAND = 0.02


@dataclass(frozen=True)
class McConfig:
    n_trials: int = 50
    horizon_s: float = 20.0
    dt_s: float = 0.01
    seed: int = 42

    def __post_init__(self):
        if self.n_trials < 1 or self.horizon_s <= 0 or self.dt_s <= 0:
            raise ValueError("Monte Carlo config values must be positive")


@dataclass(frozen=True)
class McStats:
    n_trials: int
    settling_time_median_s: float
    settling_time_max_s: float
    overshoot_median: float
    overshoot_max: float
    diverged_count: int
    seed: int


@dataclass(frozen=True)
class Violation:
    kind: str  # settling_time | overshoot | hinf | infeasible_synthesis
    measured: float
    target: float
    severity: str  # low | medium | high | critical


@dataclass(frozen=True)
class VerificationReport:
    mc: McStats
    freq: FreqMetrics
    violations: tuple = ()


_SEVERITY_ORDER = ("low", "medium", "high", "critical")


def classify_severity(measured: float, target: float) -> str:
    """Severity from relative excess r = (measured-target)/max(|target|, eps)."""
    r = (measured - target) / max(abs(target), 1e-9)
    if r <= 0.10:
        return "low"
    if r <= 0.50:
        return "medium"
    if r <= 2.0:
        return "high"
    return "critical"


def max_severity(violations) -> str:
    """Highest severity present among the violations."""
    if not violations:
        raise ValueError("no violations to rank")
    return max((v.severity for v in violations), key=_SEVERITY_ORDER.index)


def _trial_initial_state(seed: int, trial: int, n: int) -> np.ndarray:
    rng = np.random.default_rng((seed, trial))
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def monte_carlo(p: PlantModel, K: np.ndarray, cfg: McConfig = McConfig()) -> McStats:
    """Monte Carlo regulation statistics for the closed loop A + BK.

    Each trial starts from a unit-norm Gaussian initial state drawn from a
    per-trial seeded generator and steps the exact discretized flow
    x_{k+1} = expm((A+BK) dt) x_k over the horizon. Settling time is the
    earliest time after which the state norm stays within 2% of its peak;
    overshoot is the peak-norm excess over the initial norm (clipped at 0).
    Trials whose norm exceeds 1e6 count as diverged with settling +inf.
    """
    K = np.asarray(K, dtype=float)
    Acl = p.A + p.B @ K
    n = p.n
    n_steps = int(round(cfg.horizon_s / cfg.dt_s))
    Phi = expm(Acl * cfg.dt_s)

    settlings = np.empty(cfg.n_trials)
    overshoots = np.empty(cfg.n_trials)
    diverged = 0
    for trial in range(cfg.n_trials):
        x = _trial_initial_state(cfg.seed, trial, n)
        x0_norm = np.linalg.norm(x)
        norms = np.empty(n_steps + 1)
        norms[0] = x0_norm
        blew_up = False
        for k in range(1, n_steps + 1):
            x = Phi @ x
            norms[k] = np.linalg.norm(x)
            if norms[k] > DIVERGENCE_NORM:
                blew_up = True
                norms[k:] = norms[k]
                break
        peak = float(np.max(norms))
        overshoots[trial] = max(0.0, (peak - x0_norm) / x0_norm)
        if blew_up:
            diverged += 1
            settlings[trial] = np.inf
            continue
        band = SETTLING_BAND * peak
        above = np.nonzero(norms > band)[0]
        if above.size == 0:
            settlings[trial] = 0.0
        elif above[-1] == n_steps:
            settlings[trial] = np.inf  # never enters the band for good
        else:
            settlings[trial] = (above[-1] + 1) * cfg.dt_s
    return McStats(
        n_trials=cfg.n_trials,
        settling_time_median_s=float(np.median(settlings)),
        settling_time_max_s=float(np.max(settlings)),
        overshoot_median=float(np.median(overshoots)),
        overshoot_max=float(np.max(overshoots)),
        diverged_count=diverged,
        seed=cfg.seed,
    )


def freq_check(p: PlantModel, K: np.ndarray) -> FreqMetrics:
    """Frequency-domain branch: state feedback gets the disturbance-rejection
    norm ||(Cz+DzK)(sI-(A+BK))^-1 E||_inf; output-feedback-shaped gains get
    sensitivity peaks and margins."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != p.m:
        raise ValueError(f"gain shape {K.shape} inconsistent with plant inputs")
    if K.shape[1] == p.n:
        Acl = p.A + p.B @ K
        Ccl = p.Cz + p.Dz @ K
        dr = hinf_norm(Acl, p.E, Ccl, np.zeros((p.z, p.w)))
        return FreqMetrics(controller_type="state_fb", disturbance_rejection=float(dr))
    ny = p.Cy.shape[0] if p.Cy is not None else p.z
    if K.shape[1] == ny:
        return loop_margins(p, K)
    raise ValueError(
        f"gain has {K.shape[1]} columns; expected {p.n} (state fb) or {ny} (output fb)"
    )


def check(mc: McStats, freq: FreqMetrics, specs: SpecSet) -> list:
    """Classify spec violations from the measured statistics.

    Time-domain specs are checked against median values with slack applied;
    the certified-norm check compares disturbance rejection against the bare
    gamma target (no slack).
    """
    out = []
    st = specs.settling_time
    if mc.settling_time_median_s > st.target + st.slack:
        out.append(Violation(
            kind="settling_time",
            measured=mc.settling_time_median_s,
            target=st.target,
            severity=classify_severity(mc.settling_time_median_s, st.target),
        ))
    ov = specs.overshoot
    if mc.overshoot_median > ov.target + ov.slack:
        out.append(Violation(
            kind="overshoot",
            measured=mc.overshoot_median,
            target=ov.target,
            severity=classify_severity(mc.overshoot_median, ov.target),
        ))
    if freq.controller_type == "state_fb" and freq.disturbance_rejection is not None:
        if freq.disturbance_rejection > specs.hinf.target:
            out.append(Violation(
                kind="hinf",
                measured=freq.disturbance_rejection,
                target=specs.hinf.target,
                severity=classify_severity(freq.disturbance_rejection, specs.hinf.target),
            ))
    return out
