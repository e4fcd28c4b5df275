"""Unknown-input decoupled filter: gain design, validation, and the recursion.

The filter runs three steps per sample,

    d_hat[k]      = F (y[k] - C x_pred[k])
    x_filt[k]     = x_pred[k] + L (y[k] - C x_pred[k])
    x_pred[k+1]   = A x_filt[k] + B d_hat[k]

and is unbiased iff F D = I and L D = 0. The transformed innovation
Y[k] = L (y[k] - C x_pred[k]) is decoupled from the unknown input and is the
quantity all downstream autocovariance processing consumes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .linalg import as_matrix, spectral_radius
from .systems import CheckResult, LtiSystem, ValidationReport

GAIN_CONSTRAINT_TOL = 1e-10


class GainDesignError(RuntimeError):
    """No stabilizing gain was found within the search budget."""

    def __init__(self, message: str, best_radius: float):
        super().__init__(message)
        self.best_radius = best_radius


@dataclass(frozen=True)
class FilterGains:
    """Gain pair (F, L) with the derived injection gain K = A L + B F."""

    F: np.ndarray
    L: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        for name in ("F", "L", "K"):
            arr = as_matrix(getattr(self, name), name)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {"F": self.F.tolist(), "L": self.L.tolist()}


@dataclass(frozen=True)
class DesignOptions:
    seed: int = 0
    restarts: int = 200
    stability_margin: float = 1e-2
    search_maxiter: int = 200


@dataclass(frozen=True)
class FilterRun:
    """Per-step filter output over a measurement sequence.

    Arrays are time-major: x_pred[k] is the one-step prediction available
    before sample k is processed, innovations holds the raw innovation
    y[k] - C x_pred[k], and transformed holds its image under L.
    """

    x_pred: np.ndarray
    x_filt: np.ndarray
    d_hat: np.ndarray
    innovations: np.ndarray
    transformed: np.ndarray

    def __len__(self) -> int:
        return self.x_pred.shape[0]

    def to_csv(self, path) -> None:
        n = self.x_pred.shape[1]
        q = self.d_hat.shape[1]
        p = self.innovations.shape[1]
        header = (
            ["k"]
            + [f"x_pred{i + 1}" for i in range(n)]
            + [f"x_filt{i + 1}" for i in range(n)]
            + [f"d_hat{i + 1}" for i in range(q)]
            + [f"ytilde{i + 1}" for i in range(p)]
            + [f"Y{i + 1}" for i in range(n)]
        )
        ks = np.arange(1, len(self) + 1)[:, None]
        table = np.hstack([ks, self.x_pred, self.x_filt, self.d_hat, self.innovations, self.transformed])
        np.savetxt(path, table, delimiter=",", header=",".join(header), comments="")


def make_gains(sys: LtiSystem, F, L) -> FilterGains:
    F = as_matrix(F, "F")
    L = as_matrix(L, "L")
    return FilterGains(F=F, L=L, K=sys.A @ L + sys.B @ F)


def validate_gains(sys: LtiSystem, F, L) -> ValidationReport:
    """Check unbiasedness (F D = I, L D = 0) and stability of A - K C."""
    F = as_matrix(F, "F")
    L = as_matrix(L, "L")
    checks = []
    if F.shape != (sys.q, sys.p):
        raise ValueError(f"F must be {sys.q}x{sys.p}, got {F.shape}")
    if L.shape != (sys.n, sys.p):
        raise ValueError(f"L must be {sys.n}x{sys.p}, got {L.shape}")

    fd_dev = float(np.abs(F @ sys.D - np.eye(sys.q)).max())
    checks.append(
        CheckResult("input_gain_left_inverse", fd_dev <= GAIN_CONSTRAINT_TOL, {"max_abs_dev": fd_dev})
    )
    ld_dev = float(np.abs(L @ sys.D).max()) if sys.q else 0.0
    checks.append(
        CheckResult("state_gain_annihilates_feedthrough", ld_dev <= GAIN_CONSTRAINT_TOL, {"max_abs_dev": ld_dev})
    )
    K = sys.A @ L + sys.B @ F
    radius = spectral_radius(sys.A - K @ sys.C)
    checks.append(CheckResult("error_dynamics_stable", radius < 1.0, {"spectral_radius": radius}))
    return ValidationReport(tuple(checks))


def _feasible_parameterization(sys: LtiSystem):
    """Affine parameterization of all (F, L) with F D = I and L D = 0.

    F = F0 + Nf Pi and L = Z Pi, where F0 is the left pseudo-inverse of D and
    Pi projects onto the orthogonal complement of range(D).
    """
    D = sys.D
    F0 = np.linalg.solve(D.T @ D, D.T)
    Pi = np.eye(sys.p) - D @ F0
    return F0, Pi


def _riccati_start(sys: LtiSystem, F0: np.ndarray, Pi: np.ndarray) -> np.ndarray | None:
    """Observer-style warm start: stabilize A - B F0 C by output injection
    through Pi C, then pull the injection back to (Z, Nf) by least squares."""
    Abar = sys.A - sys.B @ F0 @ sys.C
    Cbar = Pi @ sys.C
    try:
        X = scipy.linalg.solve_discrete_are(Abar.T, Cbar.T, np.eye(sys.n), np.eye(sys.p))
    except (np.linalg.LinAlgError, ValueError):
        return None
    M = np.linalg.solve(np.eye(sys.p) + Cbar @ X @ Cbar.T, Cbar @ X @ Abar.T).T
    stacked, *_ = np.linalg.lstsq(np.hstack([sys.A, sys.B]), M, rcond=None)
    Z, Nf = stacked[: sys.n], stacked[sys.n :]
    return np.concatenate([Z.ravel(), Nf.ravel()])


def design_gains(sys: LtiSystem, options: DesignOptions | None = None) -> FilterGains:
    """Construct gains satisfying the unbiasedness constraints with a Schur
    stable error matrix A - K C.

    The free parameters of the affine feasible set are tuned by a seeded
    multi-start direct search on the spectral radius, stopping at the first
    design inside the stability margin. An observer-style warm start is tried
    before random restarts. Raises :class:`GainDesignError` (carrying the best
    radius achieved) when the budget is exhausted; the caller may then supply
    gains manually.
    """
    opts = options or DesignOptions()
    F0, Pi = _feasible_parameterization(sys)
    target = 1.0 - opts.stability_margin

    def assemble(x: np.ndarray) -> FilterGains:
        Z = x[: sys.n * sys.p].reshape(sys.n, sys.p)
        Nf = x[sys.n * sys.p :].reshape(sys.q, sys.p)
        return make_gains(sys, F0 + Nf @ Pi, Z @ Pi)

    def radius(x: np.ndarray) -> float:
        gains = assemble(x)
        return spectral_radius(sys.A - gains.K @ sys.C)

    # D square invertible: Pi = 0 and the feasible set is a single point.
    # A projector of rank >= 1 has a diagonal entry >= 1/p, so an absolute
    # threshold is safe and avoids promoting rounding noise into free moves.
    if np.abs(Pi).max() < 1e-8:
        gains = make_gains(sys, F0, np.zeros((sys.n, sys.p)))
        rho = spectral_radius(sys.A - gains.K @ sys.C)
        if rho < 1.0:
            return gains
        raise GainDesignError(
            f"feasible gain set is a single point with spectral radius {rho:.6f}", rho
        )

    dim = sys.n * sys.p + sys.q * sys.p
    rng = np.random.default_rng(opts.seed)
    starts = [np.zeros(dim)]
    warm = _riccati_start(sys, F0, Pi)
    if warm is not None:
        starts.insert(0, warm)

    best = np.inf
    for attempt in range(opts.restarts):
        x0 = starts[attempt] if attempt < len(starts) else rng.standard_normal(dim) * (
            0.3 * 3.0 ** (attempt % 3)
        )
        rho0 = radius(x0)
        best = min(best, rho0)
        if rho0 <= target:
            return assemble(x0)
        result = scipy.optimize.minimize(
            radius,
            x0,
            method="Nelder-Mead",
            options={"maxiter": opts.search_maxiter * dim, "xatol": 1e-8, "fatol": 1e-10},
        )
        best = min(best, float(result.fun))
        if result.fun <= target:
            return assemble(result.x)
    raise GainDesignError(
        f"no stabilizing gain found in {opts.restarts} restarts (best spectral radius {best:.6f})",
        best,
    )


def run_filter(sys: LtiSystem, gains: FilterGains, measurements, x0_hat=None) -> FilterRun:
    """Fold the three-step recursion over a measurement sequence.

    ``measurements`` is an (N, p) array (or list of p-vectors); the initial
    state guess defaults to zero, which biases the transient unless the true
    initial state is zero.
    """
    y = np.asarray(measurements, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[1] != sys.p:
        raise ValueError(f"measurements must be (N, {sys.p}), got {y.shape}")
    steps = y.shape[0]
    if steps == 0:
        raise ValueError("measurement sequence is empty")

    x_pred = np.zeros((steps, sys.n))
    x_filt = np.zeros((steps, sys.n))
    d_hat = np.zeros((steps, sys.q))
    innov = np.zeros((steps, sys.p))

    A, B, C = sys.A, sys.B, sys.C
    F, L = gains.F, gains.L
    xp = np.zeros(sys.n) if x0_hat is None else np.asarray(x0_hat, dtype=float).reshape(sys.n)
    for k in range(steps):
        e = y[k] - C @ xp
        dh = F @ e
        xf = xp + L @ e
        x_pred[k], x_filt[k], d_hat[k], innov[k] = xp, xf, dh, e
        xp = A @ xf + B @ dh

    return FilterRun(
        x_pred=x_pred,
        x_filt=x_filt,
        d_hat=d_hat,
        innovations=innov,
        transformed=innov @ L.T,
    )


def save_gains(gains: FilterGains, path) -> None:
    with open(path, "w") as fh:
        json.dump(gains.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_gains(path, sys: LtiSystem) -> FilterGains:
    """Read gains from JSON ({"F": rows, "L": rows}) and derive K for the system."""
    with open(path) as fh:
        data = json.load(fh)
    missing = [k for k in ("F", "L") if k not in data]
    if missing:
        raise KeyError(f"gains file {path} is missing keys: {missing}")
    gains = make_gains(sys, data["F"], data["L"])
    report = validate_gains(sys, gains.F, gains.L)
    if not report.overall:
        failed = [c.name for c in report.checks if not c.passed]
        warnings.warn(f"loaded gains violate: {failed}", stacklevel=2)
    return gains
