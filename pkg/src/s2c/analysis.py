"""Numerical analysis kernel: spectra, matrix exponential, H-infinity norm,
loop margins, and the CARE-based LQR gain."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

# Relative tolerance of the H-infinity bisection.
HINF_REL_TOL = 1e-6
# A Hamiltonian eigenvalue counts as purely imaginary when |Re| <= this
# fraction of max(1, |lambda|). Scaling per eigenvalue (rather than by
# ||H||) keeps the test meaningful for stiff systems, where ||H|| can be
# many orders of magnitude above the eigenvalues that matter.
IMAG_EIG_REL_THRESHOLD = 1e-7


class AnalysisError(RuntimeError):
    """Numerical failure inside the analysis kernel."""


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a square matrix plus the maximum real part."""

    eigenvalues: tuple
    max_real_part: float


@dataclass(frozen=True)
class FreqMetrics:
    """Frequency-domain metrics for one of the two controller branches."""

    controller_type: str  # "state_fb" | "output_fb"
    disturbance_rejection: Optional[float] = None
    Ms: Optional[float] = None
    Mt: Optional[float] = None
    GM_dB: Optional[float] = None
    PM_deg: Optional[float] = None


def eigvals(M: np.ndarray) -> Spectrum:
    """Eigenvalues of a square finite matrix as a Spectrum."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise AnalysisError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise AnalysisError("matrix contains non-finite entries")
    try:
        lam = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise AnalysisError(f"eigenvalue iteration failed: {exc}") from None
    return Spectrum(tuple(lam), float(np.max(lam.real)))


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring via scipy)."""
    M = np.asarray(M, dtype=float)
    out = scipy.linalg.expm(M)
    if not np.all(np.isfinite(out)):
        raise AnalysisError("matrix exponential overflowed")
    return out


def freq_response_peak(A, B, C, D, n_points: int = 10_000,
                       w_lo: float = 1e-4, w_hi: float = 1e4) -> float:
    """Peak max singular value of C(jwI-A)^-1 B + D on a log grid plus w=0.

    A lower bound on the true H-infinity norm; used for the bisection
    bracket and as the independent grid oracle in tests.
    """
    n = A.shape[0]
    omegas = np.concatenate(([0.0], np.logspace(np.log10(w_lo), np.log10(w_hi), n_points)))
    peak = 0.0
    I = np.eye(n)
    for w in omegas:
        G = C @ np.linalg.solve(1j * w * I - A, B) + D
        peak = max(peak, np.linalg.svd(G, compute_uv=False)[0])
    return float(peak)


def _has_imaginary_hamiltonian_eig(A, B, C, D, gamma: float) -> bool:
    """True iff the level-gamma Hamiltonian has a purely imaginary eigenvalue,
    i.e. gamma is NOT an upper bound on the transfer norm."""
    nw = B.shape[1]
    R = gamma**2 * np.eye(nw) - D.T @ D
    # R > 0 is guaranteed by gamma > smax(D) at every bisection point.
    Rinv = np.linalg.inv(R)
    Acl = A + B @ Rinv @ D.T @ C
    H = np.block([
        [Acl, B @ Rinv @ B.T],
        [-C.T @ (np.eye(C.shape[0]) + D @ Rinv @ D.T) @ C, -Acl.T],
    ])
    lam = np.linalg.eigvals(H)
    thresh = IMAG_EIG_REL_THRESHOLD * np.maximum(1.0, np.abs(lam))
    return bool(np.any(np.abs(lam.real) <= thresh))


def hinf_norm(A, Bin, Cout, Dthru) -> float:
    """H-infinity norm of C(sI-A)^-1 B + D by gamma-bisection.

    Uses the Hamiltonian purely-imaginary-eigenvalue test; the result gamma*
    brackets the true norm within HINF_REL_TOL relative. Returns +inf when
    A is not Hurwitz.
    """
    A = np.asarray(A, dtype=float)
    Bin = np.asarray(Bin, dtype=float)
    Cout = np.asarray(Cout, dtype=float)
    Dthru = np.asarray(Dthru, dtype=float)
    if eigvals(A).max_real_part >= 0:
        return np.inf
    smax_d = float(np.linalg.svd(Dthru, compute_uv=False)[0]) if Dthru.size else 0.0
    if not Bin.size or not Cout.size or np.all(Bin == 0) or np.all(Cout == 0):
        return smax_d
    # Coarse grid peak is a certified lower bound and anchors the bracket.
    grid_peak = freq_response_peak(A, Bin, Cout, Dthru, n_points=200)
    if grid_peak == 0.0:
        return 0.0
    lo = max(grid_peak, smax_d)
    hi = max(2.0 * grid_peak, 2.0 * smax_d, 1e-12)
    # Grow hi until it is a verified upper bound.
    for _ in range(60):
        if not _has_imaginary_hamiltonian_eig(A, Bin, Cout, Dthru, hi):
            break
        lo = hi
        hi *= 2.0
    else:
        raise AnalysisError("H-infinity bisection failed to bracket the norm")
    while hi - lo > HINF_REL_TOL * max(lo, 1e-30):
        mid = 0.5 * (lo + hi)
        if _has_imaginary_hamiltonian_eig(A, Bin, Cout, Dthru, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def care_lqr(A, B, Q, R) -> np.ndarray:
    """LQR gain from the continuous algebraic Riccati equation.

    Solves A'X + XA - XBR^-1B'X + Q = 0 via the stable invariant subspace
    of the associated Hamiltonian and returns K = -R^-1 B' X (so u = Kx
    and A + BK is Hurwitz for stabilizable pairs).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    n = A.shape[0]
    Rinv = np.linalg.inv(R)
    H = np.block([[A, -B @ Rinv @ B.T], [-Q, -A.T]])
    T, Z, sdim = scipy.linalg.schur(H, output="real", sort=lambda re, im: re < 0)
    if sdim != n:
        raise AnalysisError("no stabilizing CARE solution (pair not stabilizable?)")
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    try:
        X = np.linalg.solve(U1.T, U2.T).T
    except np.linalg.LinAlgError as exc:
        raise AnalysisError(f"CARE subspace is singular: {exc}") from None
    X = 0.5 * (X + X.T)
    K = -Rinv @ B.T @ X
    if eigvals(A + B @ K).max_real_part >= 0:
        raise AnalysisError("CARE gain failed the closed-loop stability check")
    return K


def _siso_margins(A, b, c, w_lo=1e-4, w_hi=1e4, n_points=4000):
    """Gain/phase margins of the SISO loop l(s) = c (sI-A)^-1 b.

    Grid scan with local bisection refinement at each crossing. Returns
    (GM_dB, PM_deg); either may be +inf when the relevant crossing is absent.
    """
    n = A.shape[0]
    I = np.eye(n)

    def L(w):
        return complex((c @ np.linalg.solve(1j * w * I - A, b)).item())

    omegas = np.logspace(np.log10(w_lo), np.log10(w_hi), n_points)
    vals = np.array([L(w) for w in omegas])
    mags = np.abs(vals)
    phases = np.unwrap(np.angle(vals))

    def refine(f, wa, wb):
        fa = f(wa)
        for _ in range(80):
            wm = np.sqrt(wa * wb)
            fm = f(wm)
            if fa * fm <= 0:
                wb = wm
            else:
                wa, fa = wm, fm
        return np.sqrt(wa * wb)

    pm = np.inf
    gain_cross = np.nonzero(np.diff(np.sign(mags - 1.0)))[0]
    for i in gain_cross:
        wc = refine(lambda w: abs(L(w)) - 1.0, omegas[i], omegas[i + 1])
        pm = min(pm, 180.0 + np.degrees(np.angle(L(wc))))
    gm = np.inf
    phase_cross = np.nonzero(np.diff(np.sign(phases + np.pi)))[0]
    for i in phase_cross:
        wc = refine(lambda w: np.angle(L(w)) + np.pi, omegas[i], omegas[i + 1])
        mag = abs(L(wc))
        if mag > 0:
            gm = min(gm, -20.0 * np.log10(mag))
    return float(gm), float(pm)


def loop_margins(plant, K) -> FreqMetrics:
    """Sensitivity peaks and classical margins for an output-feedback gain.

    L(s) = G(s) K with G = Cy (sI-A)^-1 B. Ms/Mt are H-infinity norms of
    S = (I+L)^-1 and T = L(I+L)^-1; GM/PM are the worst case over the
    diagonal loop channels.
    """
    K = np.asarray(K, dtype=float)
    Cy = plant.Cy if plant.Cy is not None else plant.Cz
    ny = Cy.shape[0]
    if K.shape[1] != ny:
        raise AnalysisError(
            f"loop_margins needs an output-feedback gain with {ny} columns, got {K.shape}"
        )
    A, B = plant.A, plant.B
    BK = B @ K
    # L = Cy (sI-A)^-1 BK with D=0, so S = I - Cy (sI-(A-BK*...))^-1 ...
    A_cl = A - BK @ Cy
    if np.all(BK == 0):
        ms, mt = 1.0, 0.0
    else:
        ms = hinf_norm(A_cl, BK, -Cy, np.eye(ny))
        mt = hinf_norm(A_cl, BK, Cy, np.zeros((ny, ny)))
    gm, pm = np.inf, np.inf
    for i in range(ny):
        bi = BK[:, i : i + 1]
        ci = Cy[i : i + 1, :]
        if np.all(bi == 0) or np.all(ci == 0):
            continue
        gmi, pmi = _siso_margins(A, bi, ci)
        gm = min(gm, gmi)
        pm = min(pm, pmi)
    return FreqMetrics(
        controller_type="output_fb",
        Ms=float(ms), Mt=float(mt), GM_dB=float(gm), PM_deg=float(pm),
    )
