"""Innovation-generating error model and its analytic second-order statistics.

The prediction error of a stable unbiased filter evolves as

    xerr[k+1] = A_c xerr[k] + G w[k] - K v[k],      A_c = A - K C
    Y[k]      = L_tilde xerr[k] + L v[k],           L_tilde = L C

with no contribution from the unknown input. Its steady-state covariance P
solves the discrete Lyapunov equation P = A_c P A_c^T + G Q G^T + K R K^T,
and the stacked lag autocovariances of Y are affine in (Q, R).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtering import FilterGains
from .linalg import spectral_radius, symmetrize, unvec, vec
from .systems import LtiSystem, NoiseSpec

LYAPUNOV_RESIDUAL_TOL = 1e-10


class UnstableDynamicsError(ValueError):
    """The closed-loop error matrix is not Schur stable."""


@dataclass(frozen=True)
class ErrorDynamics:
    A_c: np.ndarray
    K: np.ndarray
    G_tilde: np.ndarray  # [G, -K]
    L_tilde: np.ndarray  # L C
    L: np.ndarray

    @property
    def n(self) -> int:
        return self.A_c.shape[0]

    @property
    def p(self) -> int:
        return self.K.shape[1]


@dataclass(frozen=True)
class SteadyStateCov:
    P: np.ndarray
    residual: float  # Frobenius norm of the Lyapunov defect


@dataclass(frozen=True)
class AutocovStack:
    """First column block of the innovation autocovariance over a lag window.

    ``stack`` is the (N n) x n matrix whose j-th n x n block is
    E(Y[k+j] Y[k]^T) under the steady-state distribution.
    """

    N: int
    stack: np.ndarray

    @property
    def blocks(self) -> np.ndarray:
        n = self.stack.shape[1]
        return self.stack.reshape(self.N, n, n)

    @property
    def vectorized(self) -> np.ndarray:
        return vec(self.stack)

    def to_csv(self, path) -> None:
        n = self.stack.shape[1]
        header = ",".join(f"col{i + 1}" for i in range(n))
        np.savetxt(path, self.stack, delimiter=",", header=header, comments="")


def build_error_dynamics(sys: LtiSystem, gains: FilterGains) -> ErrorDynamics:
    A_c = sys.A - gains.K @ sys.C
    rho = spectral_radius(A_c)
    if rho >= 1.0:
        raise UnstableDynamicsError(
            f"error dynamics are unstable (spectral radius {rho:.6f}); "
            "the steady-state covariance does not exist"
        )
    return ErrorDynamics(
        A_c=A_c,
        K=gains.K,
        G_tilde=np.hstack([sys.G, -gains.K]),
        L_tilde=gains.L @ sys.C,
        L=gains.L,
    )


def steady_state_covariance(ed: ErrorDynamics, noise: NoiseSpec, G) -> SteadyStateCov:
    """Solve the Lyapunov fixed point through its vectorized linear form.

    The dense Kronecker solve is O(n^6) and deliberate: problem sizes here are
    desk scale and the same vectorized operator reappears in the regression
    matrices, so both paths share one formulation.
    """
    G = np.asarray(G, dtype=float)
    n = ed.n
    S = np.eye(n * n) - np.kron(ed.A_c, ed.A_c)
    rhs = np.kron(G, G) @ vec(noise.Q) + np.kron(ed.K, ed.K) @ vec(noise.R)
    try:
        Ps = np.linalg.solve(S, rhs)
    except np.linalg.LinAlgError as exc:  # impossible for a Schur stable A_c
        raise UnstableDynamicsError(f"vectorized Lyapunov operator is singular: {exc}") from exc
    P = symmetrize(unvec(Ps, (n, n)))
    defect = P - (ed.A_c @ P @ ed.A_c.T + G @ noise.Q @ G.T + ed.K @ noise.R @ ed.K.T)
    return SteadyStateCov(P=P, residual=float(np.linalg.norm(defect)))


def analytic_autocov(ed: ErrorDynamics, noise: NoiseSpec, G, N: int) -> AutocovStack:
    """Evaluate the stacked lag autocovariances block by block.

    Block 0 is L_tilde P L_tilde^T + L R L^T; block j >= 1 is
    L_tilde A_c^j P L_tilde^T - L_tilde A_c^(j-1) K R L^T.
    """
    if N < 1:
        raise ValueError(f"lag window must be >= 1, got {N}")
    P = steady_state_covariance(ed, noise, G).P
    Lt, L, K, R = ed.L_tilde, ed.L, ed.K, noise.R
    blocks = [Lt @ P @ Lt.T + L @ R @ L.T]
    running = Lt  # L_tilde A_c^(j-1)
    for _ in range(1, N):
        blocks.append(running @ ed.A_c @ P @ Lt.T - running @ K @ R @ L.T)
        running = running @ ed.A_c
    return AutocovStack(N=N, stack=np.vstack(blocks))
