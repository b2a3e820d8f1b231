"""Semidefinite feasibility/optimization for block-LMI synthesis problems.

The solver bisects on the scalar gamma; each feasibility subproblem is a
phase-1 slack minimization (minimize t such that every block F_j(x) - t*I
stays negative definite) solved with a log-det barrier Newton method. Every
returned solution is re-certified by eigendecomposition of the constraint
blocks before a status is assigned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# Margin turning strict negative definiteness into F <= -EPS_CERT * I.
EPS_CERT = 1e-7
# Floor on lambda_min(P) imposed as an explicit constraint block.
P_FLOOR = 0.1
# Newton iterations allowed per feasibility subproblem. The bracket-end
# solves get a larger budget because they decide feasibility/infeasibility
# of the whole problem; interior bisection solves only steer the bracket
# (a timeout there is treated conservatively as the infeasible side).
NEWTON_CAP = 1000
NEWTON_CAP_BISECT = 120
# Outer bisection steps on gamma.
BISECTION_CAP = 60


@dataclass(frozen=True)
class AffineBlock:
    """Symmetric matrix expression const + sum_i x_i * coeffs[i]."""

    const: np.ndarray   # (s, s)
    coeffs: np.ndarray  # (p, s, s)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(x, self.coeffs, axes=(0, 0))


@dataclass(frozen=True)
class LmiProblem:
    """Block-LMI problem in variables (P symmetric n x n, Y m x n, gamma).

    `blocks_at(gamma)` returns the constraint blocks, each required to be
    <= -eps_cert * I, as affine expressions in the packed variable vector
    (vech(P) followed by vec(Y)).
    """

    n: int
    m: int
    gamma_min: float
    gamma_target: float
    blocks_at: Callable[[float], list[AffineBlock]]
    eps_cert: float = EPS_CERT


@dataclass(frozen=True)
class SdpSolution:
    P: Optional[np.ndarray]
    Y: Optional[np.ndarray]
    gamma: Optional[float]
    status: str  # optimal | feasible | infeasible | numerical_failure
    residuals: tuple = ()
    iterations: int = 0


def n_vars(n: int, m: int) -> int:
    return n * (n + 1) // 2 + m * n


def sym_basis(n: int) -> list[np.ndarray]:
    """Basis of symmetric n x n matrices in vech order."""
    out = []
    for i in range(n):
        for j in range(i, n):
            Eij = np.zeros((n, n))
            Eij[i, j] = 1.0
            Eij[j, i] = 1.0
            out.append(Eij)
    return out


def unpack_vars(x: np.ndarray, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Recover (P, Y) from the packed variable vector."""
    P = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i, n):
            P[i, j] = P[j, i] = x[k]
            k += 1
    Y = x[k:].reshape(m, n)
    return P, Y


def pack_vars(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    return np.concatenate([P[np.triu_indices(n)], Y.ravel()])


def blocks_from_funcs(n: int, m: int, funcs) -> list[AffineBlock]:
    """Build affine blocks from callables f(P, Y) -> symmetric matrix."""
    p = n_vars(n, m)
    basis_P = sym_basis(n)
    zero_P = np.zeros((n, n))
    zero_Y = np.zeros((m, n))
    blocks = []
    for f in funcs:
        const = np.asarray(f(zero_P, zero_Y), dtype=float)
        coeffs = np.empty((p, *const.shape))
        k = 0
        for bp in basis_P:
            coeffs[k] = f(bp, zero_Y) - const
            k += 1
        for i in range(m):
            for j in range(n):
                Yb = np.zeros((m, n))
                Yb[i, j] = 1.0
                coeffs[k] = f(zero_P, Yb) - const
                k += 1
        blocks.append(AffineBlock(const=const, coeffs=coeffs))
    return blocks


def _max_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])


def _min_slack(blocks: list[AffineBlock], x0: np.ndarray, target: float,
               newton_cap: int = NEWTON_CAP, gap_tol: float = 0.1 * EPS_CERT):
    """Minimize the slack t with F_j(x) <= t*I by barrier path-following.

    Exits as soon as t drops below `target` (feasible), or as soon as the
    barrier duality gap proves min t > target (certified infeasible).
    Returns (x, t, iters, certified) where `certified` means the verdict
    t >= target is backed by a gap bound.
    """
    p = len(x0)
    x = x0.copy()
    sizes = [b.const.shape[0] for b in blocks]
    eyes = [np.eye(s) for s in sizes]
    F = [b.evaluate(x) for b in blocks]
    maxeig = max(_max_eig(Fj) for Fj in F)
    t = maxeig + 0.05 * (1.0 + abs(maxeig))
    nu = sum(sizes)
    theta = float(nu)
    iters = 0
    ridge = np.diag_indices(p + 1)

    def logdets(Smats):
        total = 0.0
        for Sj in Smats:
            try:
                L = np.linalg.cholesky(Sj)
            except np.linalg.LinAlgError:
                return None
            total += 2.0 * np.sum(np.log(np.diag(L)))
        return total

    while iters < newton_cap:
        if t < target:
            return x, t, iters, False
        S = [0.5 * ((t * eyes[j] - F[j]) + (t * eyes[j] - F[j]).T)
             for j in range(len(blocks))]
        ld0 = logdets(S)
        if ld0 is None:
            return x, t, iters, False  # slack lost PD; treat as stalled
        g = np.zeros(p + 1)
        H = np.zeros((p + 1, p + 1))
        g[p] = theta
        try:
            inverses = [np.linalg.inv(Sj) for Sj in S]
        except np.linalg.LinAlgError:
            return x, t, iters, False  # slack matrix degenerate; stalled
        for b, W in zip(blocks, inverses):
            W = 0.5 * (W + W.T)
            WG = np.einsum("ab,ibc->iac", W, b.coeffs)
            g[:p] += np.einsum("iaa->i", WG)
            g[p] -= np.trace(W)
            H[:p, :p] += np.einsum("iab,kba->ik", WG, WG)
            ht = -np.einsum("iab,ba->i", WG, W)
            H[:p, p] += ht
            H[p, :p] += ht
            H[p, p] += np.sum(W * W)
        H[ridge] += 1e-12
        try:
            d = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        decrement = float(-g @ d)
        lam = np.sqrt(max(decrement, 0.0))
        if lam < 0.30:
            # Centered enough for this theta: t minus the (inflated, to cover
            # the approximate centering) duality gap lower-bounds min t.
            # Waiting for tighter centering is counterproductive on problems
            # with flat recession directions, where lambda decays only slowly.
            gap = 2.0 * nu / theta
            if t - gap > target or gap < gap_tol:
                return x, t, iters, True
            theta *= 20.0
            continue
        # Damped Newton step; the barrier is self-concordant, so
        # 1/(1+lambda) stays strictly feasible and makes fixed progress.
        step = 1.0 if lam < 0.25 else 1.0 / (1.0 + lam)
        dF = [np.tensordot(d[:p], b.coeffs, axes=(0, 0)) for b in blocks]
        ok = False
        for _ in range(30):
            tn = t + step * d[p]
            Sn = [0.5 * ((tn * eyes[j] - F[j] - step * dF[j])
                         + (tn * eyes[j] - F[j] - step * dF[j]).T)
                  for j in range(len(blocks))]
            if logdets(Sn) is not None:
                ok = True
                break
            step *= 0.5
        if not ok:
            return x, t, iters, False
        x = x + step * d[:p]
        t = t + step * d[p]
        F = [Fj + step * dFj for Fj, dFj in zip(F, dF)]
        iters += 1
    return x, t, iters, False


def _recheck(blocks: list[AffineBlock], x: np.ndarray, n: int, m: int,
             eps_cert: float):
    """Independent certificate recheck by eigendecomposition of each block."""
    residuals = tuple(_max_eig(b.evaluate(x)) for b in blocks)
    P, _ = unpack_vars(x, n, m)
    pmin = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])
    ok = all(r <= -eps_cert / 2 for r in residuals) and pmin >= P_FLOOR - 1e-6
    return ok, residuals


def solve(prob: LmiProblem, tol: float = 1e-8, max_iter: int = 5000) -> SdpSolution:
    """Minimize gamma over the LMI-feasible set by bisection.

    `tol` bounds the gamma suboptimality relative to max(1, gamma);
    `max_iter` caps the total Newton iterations across all feasibility
    subproblems. Solutions are certified by eigenvalue recheck before the
    status is set; anything that fails the recheck is reported as
    numerical_failure.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo_bound = max(prob.gamma_min, prob.eps_cert)
    hi = prob.gamma_target
    if hi <= 0 or hi < lo_bound:
        return SdpSolution(None, None, None, "infeasible")

    total_iters = 0
    x0 = pack_vars(np.eye(prob.n), np.zeros((prob.m, prob.n)))
    target = -prob.eps_cert

    def try_gamma(g, warm, cap):
        nonlocal total_iters
        blocks = prob.blocks_at(g)
        budget = min(cap, max(max_iter - total_iters, 0))
        x, t, it, certified = _min_slack(blocks, warm, target, newton_cap=budget)
        total_iters += it
        return (t < target), x, certified

    feasible_hi, x_hi, certified = try_gamma(hi, x0, NEWTON_CAP)
    if not feasible_hi:
        return SdpSolution(None, None, None,
                           "infeasible" if certified else "numerical_failure",
                           iterations=total_iters)

    lo, best_x, best_gamma = lo_bound, x_hi, hi
    feasible_lo, x_lo, _ = try_gamma(lo_bound, x_hi, NEWTON_CAP_BISECT)
    if feasible_lo:
        best_x, best_gamma = x_lo, lo_bound
    else:
        hi_g = hi
        for _ in range(BISECTION_CAP):
            if hi_g - lo <= tol * max(1.0, hi_g) or total_iters >= max_iter:
                break
            mid = 0.5 * (lo + hi_g)
            ok, x_mid, _ = try_gamma(mid, best_x, NEWTON_CAP_BISECT)
            if ok:
                hi_g, best_x, best_gamma = mid, x_mid, mid
            else:
                lo = mid
    ok, residuals = _recheck(prob.blocks_at(best_gamma), best_x, prob.n, prob.m,
                             prob.eps_cert)
    if not ok:
        return SdpSolution(None, None, None, "numerical_failure",
                           residuals=residuals, iterations=total_iters)
    P, Y = unpack_vars(best_x, prob.n, prob.m)
    status = "optimal" if total_iters < max_iter else "feasible"
    return SdpSolution(P=P, Y=Y, gamma=float(best_gamma), status=status,
                       residuals=residuals, iterations=total_iters)
