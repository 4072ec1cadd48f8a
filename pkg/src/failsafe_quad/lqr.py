"""Reduced attitude model about a spinning equilibrium and LQR synthesis.

The reduced state is ``s = (p, q, nx, ny)``: the two controlled body rates and
the body-frame x/y components of an inertially fixed target axis (the third
component follows from ``|n| = 1``). Yaw rate is left free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import SPIN_SIGN
from .equilibrium import Equilibrium
from .errors import SynthesisError
from .params import QuadParams


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    survivors: tuple[int, ...]


@dataclass(frozen=True)
class LqrWeights:
    Q: np.ndarray
    R: np.ndarray

    @classmethod
    def diagonal(cls, q_diag, r_diag) -> "LqrWeights":
        return cls(np.diag(np.asarray(q_diag, float)), np.diag(np.asarray(r_diag, float)))


def reduced_dynamics(params: QuadParams, eq: Equilibrium, s, u) -> np.ndarray:
    """Nonlinear time derivative of ``(p, q, nx, ny)`` at ``r = rbar``.

    ``u`` holds thrust deviations of the surviving motors, in motor order.
    """
    p, q, nx, ny = s
    nz = math.sqrt(1.0 - nx * nx - ny * ny)
    r = eq.rbar
    f = list(eq.fbar)
    for i, du in zip(eq.survivors, u):
        f[i - 1] += du
    omega = sum(sg * math.sqrt(max(fi, 0.0) / params.kf) for sg, fi in zip(SPIN_SIGN, f))
    P = params
    pd = (P.l * (f[1] - f[3]) - (P.Jzz - P.Jyy) * q * r - P.Jp * q * omega) / P.Jxx
    qd = (P.l * (f[2] - f[0]) - (P.Jxx - P.Jzz) * p * r + P.Jp * p * omega) / P.Jyy
    # Inertially fixed vector seen from the rotating body: n' = -omega x n.
    nxd = r * ny - q * nz
    nyd = p * nz - r * nx
    return np.array([pd, qd, nxd, nyd])


def linearize(params: QuadParams, eq: Equilibrium) -> LinearModel:
    P = params
    p, q, r = eq.pbar, eq.qbar, eq.rbar
    nx, ny, nz = eq.n
    omega = sum(sg * w for sg, w in zip(SPIN_SIGN, eq.wbar))
    a = -((P.Jzz - P.Jyy) * r + P.Jp * omega) / P.Jxx
    b = (-(P.Jxx - P.Jzz) * r + P.Jp * omega) / P.Jyy
    A = np.array(
        [
            [0.0, a, 0.0, 0.0],
            [b, 0.0, 0.0, 0.0],
            [0.0, -nz, q * nx / nz, r + q * ny / nz],
            [nz, 0.0, -r - p * nx / nz, -p * ny / nz],
        ]
    )
    survivors = eq.survivors
    B = np.zeros((4, len(survivors)))
    roll_arm = {2: P.l, 4: -P.l}
    pitch_arm = {1: -P.l, 3: P.l}
    for col, i in enumerate(survivors):
        # d(Omega)/d(f_i); the gyroscopic coupling vanishes when p = q = 0.
        dOmega = SPIN_SIGN[i - 1] / (2.0 * math.sqrt(P.kf * eq.fbar[i - 1])) if eq.fbar[i - 1] > 0 else 0.0
        B[0, col] = (roll_arm.get(i, 0.0) - P.Jp * q * dOmega) / P.Jxx
        B[1, col] = (pitch_arm.get(i, 0.0) + P.Jp * p * dOmega) / P.Jyy
    return LinearModel(A, B, survivors)


# --- Riccati ----------------------------------------------------------------

def solve_lyapunov(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve ``A^T X + X A + C = 0`` by Kronecker vectorization."""
    n = A.shape[0]
    I = np.eye(n)
    L = np.kron(I, A.T) + np.kron(A.T, I)
    x = np.linalg.solve(L, -C.reshape(-1, order="F"))
    X = x.reshape((n, n), order="F")
    return 0.5 * (X + X.T)


def _check_stabilizable(A, B, tol=1e-9):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if np.linalg.matrix_rank(M, tol=1e-8 * max(1.0, np.abs(M).max())) < n:
                raise SynthesisError(f"(A, B) is not stabilizable: uncontrollable eigenvalue {lam:.6g}")


def _initial_gain(A, B):
    """Stabilizing gain from the shifted Lyapunov construction (Bass)."""
    n = A.shape[0]
    # eigenvalues on the imaginary axis can come out with round-off sized
    # negative real parts, so demand a margin before skipping the shift
    margin = 1e-8 * max(1.0, np.abs(A).max())
    if np.all(np.linalg.eigvals(A).real < -margin):
        return np.zeros((B.shape[1], n))
    beta = 1.0 + np.abs(A).sum(axis=1).max()
    As = A + beta * np.eye(n)
    # (As) Z + Z As^T = 2 B B^T, i.e. the transposed Lyapunov form with -As.
    Z = solve_lyapunov(-As.T, 2.0 * B @ B.T)
    return B.T @ np.linalg.pinv(Z)


def care_residual(A, B, Q, R, P) -> np.ndarray:
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def solve_care(A, B, Q, R, *, tol=1e-12, max_iter=100):
    """Continuous algebraic Riccati equation by Newton-Kleinman iteration.

    Returns ``(P, K)`` with ``K = R^-1 B^T P``. ``Q`` may be singular.
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    if B.shape[0] != A.shape[0]:
        B = B.T
    if np.any(np.linalg.eigvalsh(0.5 * (R + R.T)) <= 0):
        raise SynthesisError("R must be positive definite")
    _check_stabilizable(A, B)
    K = _initial_gain(A, B)
    Acl = A - B @ K
    if np.any(np.linalg.eigvals(Acl).real >= 0):
        worst = max(np.linalg.eigvals(Acl), key=lambda z: z.real)
        raise SynthesisError(f"could not find a stabilizing seed gain; eigenvalue {worst:.6g}")
    P_old = None
    for _ in range(max_iter):
        Acl = A - B @ K
        P = solve_lyapunov(Acl, Q + K.T @ R @ K)
        K = np.linalg.solve(R, B.T @ P)
        if P_old is not None and np.abs(P - P_old).max() <= tol * max(1.0, np.abs(P).max()):
            break
        P_old = P
    else:
        raise SynthesisError("Newton-Kleinman iteration did not converge")
    eig = np.linalg.eigvals(A - B @ K)
    if np.any(eig.real >= 0):
        worst = max(eig, key=lambda z: z.real)
        raise SynthesisError(f"closed loop not stable; eigenvalue {worst:.6g}")
    return P, K


def lqr_gain(params: QuadParams, eq: Equilibrium, weights: LqrWeights) -> np.ndarray:
    model = linearize(params, eq)
    _, K = solve_care(model.A, model.B, weights.Q, weights.R)
    return K
