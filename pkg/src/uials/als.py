"""Autocovariance least-squares regression for the noise covariances.

Stacking the lag autocovariances of the transformed innovation and
vectorizing yields a linear model

    H [vec(Q); vec(R)] = b,

where b is either the vectorized analytic stack or its ergodic time-average
estimate from data. On any valid plant H is rank deficient, so the solvers
expose minimum-norm and Tikhonov-regularized paths and refuse to pretend the
unregularized problem has a unique answer.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .error_dynamics import ErrorDynamics, analytic_autocov
from .linalg import DEFAULT_RANK_TOL, matrix_rank, symmetrize, unvec, vec
from .systems import NoiseSpec


class NonIdentifiableError(RuntimeError):
    """The regression matrix is rank deficient and no regularization was requested."""

    def __init__(self, nullity: int):
        super().__init__(f"non-identifiable: solution set is an affine subspace of dimension {nullity}")
        self.nullity = nullity


class InsufficientDataError(ValueError):
    """Fewer innovation samples than the lag window."""


def default_burn_in(n_states: int) -> int:
    """Samples discarded before time-averaging, approximating a steady-state start."""
    return max(10 * n_states, 100)


def discard_burn_in(innovations: np.ndarray, n_states: int) -> np.ndarray:
    burn = default_burn_in(n_states)
    if innovations.shape[0] <= burn:
        raise InsufficientDataError(
            f"need more than {burn} innovation samples for burn-in, got {innovations.shape[0]}"
        )
    return innovations[burn:]


@dataclass(frozen=True)
class AlsMatrices:
    """Stacked observability-style factors and the regression blocks built
    from them. H = [H1, H2] maps [vec(Q); vec(R)] to the vectorized stack."""

    theta: np.ndarray
    theta1: np.ndarray
    upsilon: np.ndarray
    H: np.ndarray
    H1: np.ndarray
    H2: np.ndarray


def build_als_matrices(ed: ErrorDynamics, G, N: int) -> AlsMatrices:
    """Assemble the regression matrices for a lag window of length N.

    The rank statements underpinning the identifiability analysis assume
    N >= n + 1; shorter windows are built anyway with a warning.
    """
    if N < 1:
        raise ValueError(f"lag window must be >= 1, got {N}")
    n, p = ed.n, ed.p
    if N <= n:
        warnings.warn(
            f"lag window N={N} <= state dimension {n}: rank analysis assumptions void",
            stacklevel=2,
        )
    G = np.asarray(G, dtype=float)
    Lt, L, K, A_c = ed.L_tilde, ed.L, ed.K, ed.A_c

    powers = [Lt]  # L_tilde A_c^j for j = 0 .. N-2
    for _ in range(N - 2):
        powers.append(powers[-1] @ A_c)
    theta1 = np.vstack(powers) if N > 1 else np.zeros((0, n))
    theta = np.vstack([Lt] + [row @ A_c for row in powers[: N - 1]])
    upsilon = np.vstack([L] + [-(row @ K) for row in powers[: N - 1]])

    S = np.eye(n * n) - np.kron(A_c, A_c)
    LT = np.kron(Lt, theta)
    H1 = LT @ np.linalg.solve(S, np.kron(G, G))
    H2 = LT @ np.linalg.solve(S, np.kron(K, K)) + np.kron(L, upsilon)
    return AlsMatrices(theta=theta, theta1=theta1, upsilon=upsilon, H=np.hstack([H1, H2]), H1=H1, H2=H2)


@dataclass(frozen=True)
class AlsProblem:
    """A fully assembled regression: blocks, data vector, weighting, and sizes."""

    H: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    b: np.ndarray
    N: int
    g: int
    p: int
    provenance: str  # "analytic" | "empirical"
    W: np.ndarray | None = field(default=None)

    @classmethod
    def analytic(cls, ed: ErrorDynamics, G, noise: NoiseSpec, N: int, W=None) -> "AlsProblem":
        """Problem whose data vector is the exact vectorized autocovariance stack."""
        mats = build_als_matrices(ed, G, N)
        stack = analytic_autocov(ed, noise, G, N)
        return cls(
            H=mats.H,
            H1=mats.H1,
            H2=mats.H2,
            b=stack.vectorized,
            N=N,
            g=np.asarray(G).shape[1],
            p=ed.p,
            provenance="analytic",
            W=W,
        )

    @classmethod
    def from_innovations(
        cls,
        ed: ErrorDynamics,
        G,
        innovations,
        N: int,
        W=None,
        burn_in: int | None = None,
    ) -> "AlsProblem":
        """Problem whose data vector is the ergodic time average of the data.

        The first ``burn_in`` samples are dropped (default max(10 n, 100)) so
        the average approximates the steady-state distribution.
        """
        innovations = np.asarray(innovations, dtype=float)
        burn = default_burn_in(ed.n) if burn_in is None else burn_in
        if innovations.shape[0] <= burn:
            raise InsufficientDataError(
                f"need more than {burn} innovation samples for burn-in, got {innovations.shape[0]}"
            )
        mats = build_als_matrices(ed, G, N)
        b = empirical_b(innovations[burn:], N)
        return cls(
            H=mats.H,
            H1=mats.H1,
            H2=mats.H2,
            b=b,
            N=N,
            g=np.asarray(G).shape[1],
            p=ed.p,
            provenance="empirical",
            W=W,
        )


def empirical_b(innovations, N: int) -> np.ndarray:
    """Vectorized time-average autocovariance stack of an innovation sequence.

    ``innovations`` is (N_d, n), one transformed innovation per row. Block j
    of the stack averages Y[t+j] Y[t]^T over the N_d - N + 1 admissible t.
    """
    Y = np.asarray(innovations, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n_d = Y.shape[0]
    if n_d < N:
        raise InsufficientDataError(f"need at least N={N} samples, got {n_d}")
    width = n_d - N + 1
    base = Y[:width]
    blocks = [Y[j : j + width].T @ base / width for j in range(N)]
    return vec(np.vstack(blocks))


def empirical_b_batches(innovations, N: int, n_batches: int = 40):
    """Batch-means estimate of b and its per-component standard error.

    The run is split into contiguous batches, b evaluated on each, and the
    spread of batch values converted into a standard error of the mean. This
    respects the serial correlation of the innovations as long as batches are
    much longer than the mixing time.
    """
    Y = np.asarray(innovations, dtype=float)
    batch_len = Y.shape[0] // n_batches
    if batch_len < 2 * N:
        raise InsufficientDataError(
            f"batches of {batch_len} samples are too short for lag window {N}"
        )
    values = np.stack(
        [empirical_b(Y[i * batch_len : (i + 1) * batch_len], N) for i in range(n_batches)]
    )
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return mean, se


@dataclass(frozen=True)
class AlsSolution:
    Q_hat: np.ndarray
    R_hat: np.ndarray
    residual: float
    regularization: str
    lam: float | None = None
    min_norm: bool = False
    psd_projected: bool = False
    nullity: int = 0

    def to_dict(self) -> dict:
        return {
            "Q_hat": self.Q_hat.tolist(),
            "R_hat": self.R_hat.tolist(),
            "residual": self.residual,
            "regularization": self.regularization,
            "lambda": self.lam,
            "min_norm": self.min_norm,
            "psd_projected": self.psd_projected,
            "nullity": self.nullity,
        }


def project_psd(M) -> np.ndarray:
    """Nearest symmetric PSD matrix in Frobenius norm, by eigenvalue clamping."""
    M = symmetrize(np.asarray(M, dtype=float))
    w, v = np.linalg.eigh(M)
    return symmetrize(v @ np.diag(np.clip(w, 0.0, None)) @ v.T)


def _apply_weight(H: np.ndarray, b: np.ndarray, W) -> tuple[np.ndarray, np.ndarray]:
    if W is None:
        return H, b
    W = symmetrize(np.asarray(W, dtype=float))
    Lc = np.linalg.cholesky(W)
    return Lc.T @ H, Lc.T @ b


def _symmetrizer(sizes) -> np.ndarray:
    """Block-diagonal projector onto vec images of symmetric matrices.

    The regression operator is not invariant under the transpose permutation
    of its vec coordinates, so symmetrizing a raw least-squares solution after
    the fact would leave the solution set. Restricting the solve to the
    symmetric subspace keeps the estimate a covariance candidate and the
    residual exact.
    """
    blocks = []
    for m in sizes:
        eye = np.eye(m * m)
        perm = np.zeros((m * m, m * m))
        for i in range(m):
            for j in range(m):
                perm[i + j * m, j + i * m] = 1.0
        blocks.append((eye + perm) / 2.0)
    return scipy.linalg.block_diag(*blocks)


def _solve_regression(
    H: np.ndarray,
    b: np.ndarray,
    W,
    reg: str,
    lam: float | None,
    tol: float,
    sym_sizes,
) -> tuple[np.ndarray, float, int, bool]:
    Hw, bw = _apply_weight(H, b, W)
    # nullity is reported in the raw vec coordinates, matching the rank analysis
    nullity = H.shape[1] - matrix_rank(Hw, tol)
    Hs = Hw @ _symmetrizer(sym_sizes)
    min_norm = False
    if reg == "none":
        if nullity > 0:
            raise NonIdentifiableError(nullity)
        xi, *_ = np.linalg.lstsq(Hs, bw, rcond=tol)
    elif reg == "min_norm":
        xi, *_ = np.linalg.lstsq(Hs, bw, rcond=tol)
        min_norm = True
    elif reg == "tikhonov":
        if lam is None or lam <= 0.0:
            raise ValueError("tikhonov regularization requires lam > 0")
        gram = Hs.T @ Hs + lam * np.eye(H.shape[1])
        xi = scipy.linalg.solve(gram, Hs.T @ bw, assume_a="pos")
    else:
        raise ValueError(f"unknown regularization {reg!r}; use none, min_norm, or tikhonov")
    residual = float(np.linalg.norm(Hs @ xi - bw))
    return xi, residual, nullity, min_norm


def solve_joint(
    prob: AlsProblem,
    reg: str = "min_norm",
    lam: float | None = None,
    psd_project: bool = False,
    tol: float = DEFAULT_RANK_TOL,
) -> AlsSolution:
    """Jointly estimate (Q, R) from the assembled regression.

    ``reg="none"`` raises :class:`NonIdentifiableError` whenever H is rank
    deficient, which on a valid plant is always; the non-uniqueness is the
    point, and the solver surfaces it rather than silently pseudo-inverting.
    """
    xi, residual, nullity, min_norm = _solve_regression(
        prob.H, prob.b, prob.W, reg, lam, tol, (prob.g, prob.p)
    )
    Q_hat = symmetrize(unvec(xi[: prob.g * prob.g], (prob.g, prob.g)))
    R_hat = symmetrize(unvec(xi[prob.g * prob.g :], (prob.p, prob.p)))
    if psd_project:
        Q_hat, R_hat = project_psd(Q_hat), project_psd(R_hat)
    return AlsSolution(
        Q_hat=Q_hat,
        R_hat=R_hat,
        residual=residual,
        regularization=reg,
        lam=lam,
        min_norm=min_norm,
        psd_projected=psd_project,
        nullity=nullity,
    )


def solve_q_given_r(
    prob: AlsProblem,
    R_known,
    reg: str = "min_norm",
    lam: float | None = None,
    psd_project: bool = False,
    W=None,
    tol: float = DEFAULT_RANK_TOL,
) -> AlsSolution:
    """Estimate Q with R known: regress b - H2 vec(R) on H1 alone."""
    R_known = symmetrize(np.asarray(R_known, dtype=float))
    b_q = prob.b - prob.H2 @ vec(R_known)
    weight = prob.W if W is None else W
    xi, residual, nullity, min_norm = _solve_regression(prob.H1, b_q, weight, reg, lam, tol, (prob.g,))
    Q_hat = symmetrize(unvec(xi, (prob.g, prob.g)))
    if psd_project:
        Q_hat = project_psd(Q_hat)
    return AlsSolution(
        Q_hat=Q_hat,
        R_hat=R_known,
        residual=residual,
        regularization=reg,
        lam=lam,
        min_norm=min_norm,
        psd_projected=psd_project,
        nullity=nullity,
    )


def solve_r_given_q(
    prob: AlsProblem,
    Q_known,
    reg: str = "min_norm",
    lam: float | None = None,
    psd_project: bool = False,
    W=None,
    tol: float = DEFAULT_RANK_TOL,
) -> AlsSolution:
    """Estimate R with Q known: regress b - H1 vec(Q) on H2 alone."""
    Q_known = symmetrize(np.asarray(Q_known, dtype=float))
    b_r = prob.b - prob.H1 @ vec(Q_known)
    weight = prob.W if W is None else W
    xi, residual, nullity, min_norm = _solve_regression(prob.H2, b_r, weight, reg, lam, tol, (prob.p,))
    R_hat = symmetrize(unvec(xi, (prob.p, prob.p)))
    if psd_project:
        R_hat = project_psd(R_hat)
    return AlsSolution(
        Q_hat=Q_known,
        R_hat=R_hat,
        residual=residual,
        regularization=reg,
        lam=lam,
        min_norm=min_norm,
        psd_projected=psd_project,
        nullity=nullity,
    )


def problem_to_json(prob: AlsProblem, path) -> None:
    """Write the full regression as a binary-free JSON bundle."""
    payload = {
        "H": prob.H.tolist(),
        "H1": prob.H1.tolist(),
        "H2": prob.H2.tolist(),
        "b": prob.b.tolist(),
        "W": None if prob.W is None else np.asarray(prob.W).tolist(),
        "N": prob.N,
        "g": prob.g,
        "p": prob.p,
        "provenance": prob.provenance,
        "rows": int(prob.H.shape[0]),
        "cols": int(prob.H.shape[1]),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def problem_from_json(path) -> AlsProblem:
    with open(path) as fh:
        data = json.load(fh)
    return AlsProblem(
        H=np.asarray(data["H"], dtype=float),
        H1=np.asarray(data["H1"], dtype=float),
        H2=np.asarray(data["H2"], dtype=float),
        b=np.asarray(data["b"], dtype=float),
        N=int(data["N"]),
        g=int(data["g"]),
        p=int(data["p"]),
        provenance=data["provenance"],
        W=None if data["W"] is None else np.asarray(data["W"], dtype=float),
    )
