"""Bounded-real-lemma synthesis: assembles the LMI, recovers the gain, and
emits a checkable certificate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import sdp
from .analysis import Spectrum, eigvals
from .model import PlantModel, SpecSet


@dataclass(frozen=True)
class SynthesisCertificate:
    """Gain plus the LMI variables and residuals that prove its properties."""

    status: str  # success | infeasible | failure
    K: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    Y: Optional[np.ndarray] = None
    gamma: Optional[float] = None
    alpha: float = 0.0
    closed_loop_spectrum: Optional[Spectrum] = None
    psi_max_eig: Optional[float] = None
    decay_lmi_max_eig: Optional[float] = None


def sym(X: np.ndarray) -> np.ndarray:
    return X + X.T


def assemble_psi(p: PlantModel, P, Y, gamma: float) -> np.ndarray:
    """Bounded-real-lemma block matrix for the closed loop (A+BK, E, Cz+DzK).

    [[sym(AP+BY), E, (CzP+DzY)'], [E', -gI, 0], [CzP+DzY, 0, -gI]]
    """
    P = np.asarray(P, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, w, z = p.n, p.w, p.z
    if P.shape != (n, n) or Y.shape != (p.m, n):
        raise ValueError(f"P/Y shapes {P.shape}/{Y.shape} inconsistent with plant")
    CzP_DzY = p.Cz @ P + p.Dz @ Y
    out = np.zeros((n + w + z, n + w + z))
    out[:n, :n] = sym(p.A @ P + p.B @ Y)
    out[:n, n:n + w] = p.E
    out[n:n + w, :n] = p.E.T
    out[:n, n + w:] = CzP_DzY.T
    out[n + w:, :n] = CzP_DzY
    out[n:n + w, n:n + w] = -gamma * np.eye(w)
    out[n + w:, n + w:] = -gamma * np.eye(z)
    return out


def assemble_decay(p: PlantModel, P, Y, alpha: float) -> np.ndarray:
    """Pole-region block sym(AP+BY) + 2*alpha*P enforcing Re(lambda) < -alpha."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    P = np.asarray(P, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return sym(p.A @ P + p.B @ Y) + 2.0 * alpha * P


def build_problem(p: PlantModel, gamma_min: float, gamma_target: float,
                  alpha: float) -> sdp.LmiProblem:
    """LMI problem: Psi < 0, decay block < 0, P >= 0.1 I, within gamma bounds."""
    n, m = p.n, p.m

    def blocks_at(gamma: float):
        funcs = [
            lambda P, Y: assemble_psi(p, P, Y, gamma),
            lambda P, Y: assemble_decay(p, P, Y, alpha),
            lambda P, Y: sdp.P_FLOOR * np.eye(n) - P,
        ]
        return sdp.blocks_from_funcs(n, m, funcs)

    return sdp.LmiProblem(n=n, m=m, gamma_min=gamma_min,
                          gamma_target=gamma_target, blocks_at=blocks_at)


def synthesize(p: PlantModel, specs: SpecSet,
               alpha_override: Optional[float] = None,
               tol: float = 1e-8) -> SynthesisCertificate:
    """Solve the synthesis LMI for the plant and spec set, recover K = Y P^-1,
    and recheck every certified property before reporting success.

    The plant must be continuous (run tustin_d2c first for discrete ones).
    """
    if p.domain != "continuous":
        raise ValueError("synthesis requires a continuous plant")
    alpha = specs.alpha if alpha_override is None else alpha_override
    prob = build_problem(p, specs.hinf_min, specs.hinf.target, alpha)
    sol = sdp.solve(prob, tol=tol)
    if sol.status == "infeasible":
        return SynthesisCertificate(status="infeasible", alpha=alpha)
    if sol.status == "numerical_failure":
        return SynthesisCertificate(status="failure", alpha=alpha)
    K = sol.Y @ np.linalg.inv(sol.P)
    spectrum = eigvals(p.A + p.B @ K)
    psi_max = float(np.linalg.eigvalsh(assemble_psi(p, sol.P, sol.Y, sol.gamma))[-1])
    decay_max = float(np.linalg.eigvalsh(assemble_decay(p, sol.P, sol.Y, alpha))[-1])
    pmin = float(np.linalg.eigvalsh(sol.P)[0])
    ok = (
        psi_max < 0
        and decay_max < 0
        and pmin >= sdp.P_FLOOR - 1e-6
        and spectrum.max_real_part < 0
        and specs.hinf_min - 1e-9 <= sol.gamma <= specs.hinf.target + 1e-9
    )
    if not ok:
        return SynthesisCertificate(status="failure", alpha=alpha)
    return SynthesisCertificate(
        status="success", K=K, P=sol.P, Y=sol.Y, gamma=sol.gamma, alpha=alpha,
        closed_loop_spectrum=spectrum, psi_max_eig=psi_max,
        decay_lmi_max_eig=decay_max,
    )
