"""Plant model data types, validation, and JSON ingestion.

The plant is the discrete-time linear Gaussian model

    x[k+1] = A x[k] + B d[k] + G w[k]
    y[k]   = C x[k] + D d[k] + v[k]

with an arbitrary unknown input d, process noise w ~ N(0, Q) entering through
the shaping matrix G, and measurement noise v ~ N(0, R).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    DEFAULT_RANK_TOL,
    as_matrix,
    matrix_rank,
    orthonormal_range,
    singular_values,
    symmetrize,
)

SYMMETRY_WARN_TOL = 1e-8


class DimensionError(ValueError):
    """Matrix shapes are mutually inconsistent."""


class DegenerateShapingError(ValueError):
    """The raw shaping matrix is zero: the process channel carries no noise."""


@dataclass(frozen=True)
class LtiSystem:
    """Plant matrices (A, B, G, C, D) with dimensions derived from shapes.

    All matrices must be 2-D; column vectors are n-by-1 arrays. Instances are
    immutable and safe to share across threads.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    C: np.ndarray
    D: np.ndarray
    g_assumed_identity: bool = False

    def __post_init__(self):
        for name in ("A", "B", "G", "C", "D"):
            arr = as_matrix(getattr(self, name), name)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {self.B.shape}")
        if self.G.shape[0] != n:
            raise DimensionError(f"G must have {n} rows, got {self.G.shape}")
        if self.C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {self.C.shape}")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise DimensionError(
                f"D must be {self.C.shape[0]}x{self.B.shape[1]} to match C and B, got {self.D.shape}"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.B.shape[1]

    @property
    def g(self) -> int:
        return self.G.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise covariances: Q (PSD, g x g) and R (p x p).

    R must be positive definite by default; pass ``allow_singular_r=True`` to
    accept a merely PSD R, which is needed when evaluating perturbed covariance
    pairs that sit on the PSD boundary. Inputs are symmetrized as (M + M^T)/2;
    relative asymmetry beyond 1e-8 triggers a warning, not an error.
    """

    Q: np.ndarray
    R: np.ndarray
    allow_singular_r: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("Q", "R"):
            raw = as_matrix(getattr(self, name), name)
            if raw.shape[0] != raw.shape[1]:
                raise DimensionError(f"{name} must be square, got {raw.shape}")
            sym = symmetrize(raw)
            scale = max(1.0, float(np.abs(raw).max()) if raw.size else 0.0)
            if raw.size and np.abs(raw - raw.T).max() > SYMMETRY_WARN_TOL * scale:
                warnings.warn(f"{name} is asymmetric beyond tolerance; symmetrized", stacklevel=3)
            sym.flags.writeable = False
            object.__setattr__(self, name, sym)
        wq = np.linalg.eigvalsh(self.Q) if self.Q.size else np.zeros(0)
        q_scale = max(1.0, float(np.abs(wq).max()) if wq.size else 0.0)
        if wq.size and wq.min() < -1e-10 * q_scale:
            raise ValueError(f"Q must be positive semidefinite (min eigenvalue {wq.min():.3e})")
        wr = np.linalg.eigvalsh(self.R)
        r_scale = max(1.0, float(np.abs(wr).max()) if wr.size else 0.0)
        if self.allow_singular_r:
            if wr.min() < -1e-10 * r_scale:
                raise ValueError(f"R must be positive semidefinite (min eigenvalue {wr.min():.3e})")
        elif wr.min() <= 0.0:
            raise ValueError(f"R must be positive definite (min eigenvalue {wr.min():.3e})")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    evidence: dict


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "checks": [
                {"name": c.name, "passed": c.passed, "evidence": c.evidence}
                for c in self.checks
            ],
        }


def validate_system(sys: LtiSystem, tol: float = DEFAULT_RANK_TOL) -> ValidationReport:
    """Check the standing assumptions on the plant and report the evidence.

    The report carries one entry each for dimension consistency, full column
    rank of G, full column rank of D, and detectability of (A, C). Rank checks
    never raise; they report. Dimension inconsistencies are impossible here
    because :class:`LtiSystem` rejects them at construction.
    """
    checks = []
    checks.append(
        CheckResult(
            "dimension_consistency",
            True,
            {"n": sys.n, "q": sys.q, "g": sys.g, "p": sys.p, "n_ge_g": sys.n >= sys.g},
        )
    )

    s_g = singular_values(sys.G)
    rank_g = matrix_rank(sys.G, tol)
    checks.append(
        CheckResult(
            "shaping_full_column_rank",
            rank_g == sys.g and sys.n >= sys.g,
            {"rank": rank_g, "required": sys.g, "singular_values": s_g.tolist()},
        )
    )

    s_d = singular_values(sys.D)
    rank_d = matrix_rank(sys.D, tol)
    checks.append(
        CheckResult(
            "feedthrough_full_column_rank",
            rank_d == sys.q,
            {"rank": rank_d, "required": sys.q, "singular_values": s_d.tolist()},
        )
    )

    detectable, pbh_evidence = _pbh_detectable(sys.A, sys.C, tol)
    checks.append(CheckResult("pair_detectable", detectable, pbh_evidence))
    return ValidationReport(tuple(checks))


def _pbh_detectable(A: np.ndarray, C: np.ndarray, tol: float, margin: float = 1e-9):
    """PBH test: every eigenvalue of A on or outside the unit circle must be observable."""
    n = A.shape[0]
    eigs = np.linalg.eigvals(A)
    tested = []
    ok = True
    for z in eigs:
        if abs(z) < 1.0 - margin:
            continue
        pencil = np.vstack([z * np.eye(n) - A, C])
        r = matrix_rank(pencil, tol)
        tested.append({"eigenvalue": [float(z.real), float(z.imag)], "rank": r})
        if r < n:
            ok = False
    return ok, {"boundary_or_unstable_modes": tested, "state_dim": n}


def factor_shaping(G_raw, Q_raw, tol: float = DEFAULT_RANK_TOL):
    """Remodel a rank-deficient shaping matrix into a full-column-rank one.

    Returns (G, Q) with rank(G) equal to its column count and
    G Q G^T == G_raw Q_raw G_raw^T. A shaping matrix that is already full
    column rank is returned unchanged along with its covariance.
    """
    G_raw = as_matrix(G_raw, "G_raw")
    Q_raw = symmetrize(as_matrix(Q_raw, "Q_raw"))
    if Q_raw.shape != (G_raw.shape[1], G_raw.shape[1]):
        raise DimensionError(
            f"Q_raw must be {G_raw.shape[1]}x{G_raw.shape[1]}, got {Q_raw.shape}"
        )
    if not np.any(G_raw):
        raise DegenerateShapingError("G_raw is zero: the process channel is noise-free")
    if matrix_rank(G_raw, tol) == G_raw.shape[1]:
        return G_raw.copy(), Q_raw.copy()
    basis = orthonormal_range(G_raw, tol)
    coords = basis.T @ G_raw
    return basis, symmetrize(coords @ Q_raw @ coords.T)


def load_system(path) -> tuple[LtiSystem, NoiseSpec | None]:
    """Read a system description from JSON.

    Top-level keys "A", "B", "C", "D" are required (row-major nested lists);
    "G" is optional and, when missing, is replaced by the identity so that the
    estimand becomes the lumped process covariance G Q G^T. Optional "Q" and
    "R" describe the true noise covariances and must appear together.
    """
    with open(path) as fh:
        data = json.load(fh)
    missing = [k for k in ("A", "B", "C", "D") if k not in data]
    if missing:
        raise KeyError(f"system file {path} is missing keys: {missing}")
    A = as_matrix(data["A"], "A")
    g_unknown = "G" not in data
    G = np.eye(A.shape[0]) if g_unknown else as_matrix(data["G"], "G")
    sys = LtiSystem(
        A=A,
        B=as_matrix(data["B"], "B"),
        G=G,
        C=as_matrix(data["C"], "C"),
        D=as_matrix(data["D"], "D"),
        g_assumed_identity=g_unknown,
    )
    noise = None
    if ("Q" in data) != ("R" in data):
        raise KeyError(f"system file {path} must define Q and R together")
    if "Q" in data:
        noise = NoiseSpec(as_matrix(data["Q"], "Q"), as_matrix(data["R"], "R"))
    return sys, noise
