"""Rank diagnostics and constructive non-uniqueness witnesses.

The regression matrix H = [H1, H2] is full column rank only if
rank(A) = rank(C) = n and rank(L) = p. Unbiasedness forces L D = 0 with D of
full column rank q >= 1, so rank(L) <= p - q < p: the condition can never
hold, and neither can the weaker single-covariance conditions on H1 and H2.
This module evaluates the conditions, reports ranks and nullities, and builds
explicit nonzero directions Xi = [vec(Q); vec(R)] with H Xi = 0, i.e. pairs of
distinct covariances that generate identical innovation autocovariances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .als import build_als_matrices
from .error_dynamics import ErrorDynamics, analytic_autocov
from .filtering import FilterGains
from .linalg import (
    DEFAULT_RANK_TOL,
    matrix_rank,
    nullspace,
    symmetrize,
    unvec,
    vec,
)
from .systems import LtiSystem, NoiseSpec

WITNESS_RESIDUAL_TOL = 1e-9


class WitnessNotApplicableError(ValueError):
    """The requested construction's precondition does not hold."""


@dataclass(frozen=True)
class RankReport:
    rank_h: int
    rank_h1: int
    rank_h2: int
    cols_h: int
    cols_h1: int
    cols_h2: int
    tol: float

    @property
    def nullity_h(self) -> int:
        return self.cols_h - self.rank_h

    @property
    def nullity_h1(self) -> int:
        return self.cols_h1 - self.rank_h1

    @property
    def nullity_h2(self) -> int:
        return self.cols_h2 - self.rank_h2

    def to_dict(self) -> dict:
        return {
            "rank_h": self.rank_h,
            "rank_h1": self.rank_h1,
            "rank_h2": self.rank_h2,
            "nullity_h": self.nullity_h,
            "nullity_h1": self.nullity_h1,
            "nullity_h2": self.nullity_h2,
            "tol": self.tol,
        }


def rank_report(H, H1, H2, tol: float = DEFAULT_RANK_TOL) -> RankReport:
    return RankReport(
        rank_h=matrix_rank(H, tol),
        rank_h1=matrix_rank(H1, tol),
        rank_h2=matrix_rank(H2, tol),
        cols_h=H.shape[1],
        cols_h1=H1.shape[1],
        cols_h2=H2.shape[1],
        tol=tol,
    )


@dataclass(frozen=True)
class UniquenessConditions:
    """Evaluation of the three full-rank clauses plus the structural bound
    showing their conjunction is infeasible for any unbiased design."""

    rank_a: int
    rank_c: int
    rank_l: int
    n: int
    p: int
    q: int

    @property
    def a_full(self) -> bool:
        return self.rank_a == self.n

    @property
    def c_full(self) -> bool:
        return self.rank_c == self.n

    @property
    def l_full(self) -> bool:
        return self.rank_l == self.p

    @property
    def rank_l_bound(self) -> int:
        """L D = 0 with rank(D) = q forces rank(L) <= p - q."""
        return self.p - self.q

    @property
    def all_satisfied(self) -> bool:
        return self.a_full and self.c_full and self.l_full

    @property
    def infeasible(self) -> bool:
        """True when q >= 1: the state-gain clause can never be met, since a
        full-rank L would force the annihilated feedthrough to vanish."""
        return self.q >= 1

    def to_dict(self) -> dict:
        return {
            "rank_a": self.rank_a,
            "rank_c": self.rank_c,
            "rank_l": self.rank_l,
            "a_full": self.a_full,
            "c_full": self.c_full,
            "l_full": self.l_full,
            "rank_l_bound": self.rank_l_bound,
            "all_satisfied": self.all_satisfied,
            "infeasible": self.infeasible,
        }


def check_uniqueness_conditions(
    sys: LtiSystem, gains: FilterGains, tol: float = DEFAULT_RANK_TOL
) -> UniquenessConditions:
    return UniquenessConditions(
        rank_a=matrix_rank(sys.A, tol),
        rank_c=matrix_rank(sys.C, tol),
        rank_l=matrix_rank(gains.L, tol),
        n=sys.n,
        p=sys.p,
        q=sys.q,
    )


@dataclass(frozen=True)
class Witness:
    """A nonzero direction in the null space of H.

    ``xi`` is reported at unit norm; ``xi_raw`` keeps the construction scale
    so that affine perturbations (Q + alpha dQ, R + alpha dR) match the
    construction arithmetic. ``construction`` retains the unscaled ingredients
    (the null vector, P, and the consistency right-hand side mu).
    """

    kind: str  # "deficient_L" | "singular_A" | "numerical_svd"
    xi: np.ndarray
    scale: float
    residual: float
    g: int
    p: int
    exact: bool = True
    construction: dict = field(default_factory=dict)

    @property
    def xi_raw(self) -> np.ndarray:
        return self.scale * self.xi

    @property
    def q_direction(self) -> np.ndarray:
        return symmetrize(unvec(self.xi_raw[: self.g * self.g], (self.g, self.g)))

    @property
    def r_direction(self) -> np.ndarray:
        return symmetrize(unvec(self.xi_raw[self.g * self.g :], (self.p, self.p)))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "xi": self.xi.tolist(),
            "scale": self.scale,
            "residual": self.residual,
            "exact": self.exact,
            "q_direction": self.q_direction.tolist(),
            "r_direction": self.r_direction.tolist(),
        }


def null_space_basis(H, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the numerical null space of H, columns spanning it."""
    return nullspace(H, tol)


def _certify(
    kind: str,
    xi_raw: np.ndarray,
    H: np.ndarray,
    g: int,
    p: int,
    construction: dict,
    tol: float,
) -> Witness:
    scale = float(np.linalg.norm(xi_raw))
    if scale == 0.0:
        raise WitnessNotApplicableError("constructed direction is zero")
    residual = float(np.linalg.norm(H @ xi_raw))
    bound = tol * (1.0 + np.linalg.norm(H) * scale)
    if residual <= bound:
        return Witness(
            kind=kind,
            xi=xi_raw / scale,
            scale=scale,
            residual=residual,
            g=g,
            p=p,
            exact=True,
            construction=construction,
        )
    # consistency equation had no exact solution through the shaping map;
    # fall back to a numerical null vector and flag the construction inexact
    basis = null_space_basis(H, tol)
    if basis.shape[1] == 0:
        raise WitnessNotApplicableError(
            f"construction residual {residual:.3e} exceeds bound and H has no numerical null space"
        )
    xi = basis[:, 0]
    construction = dict(construction, attempted_kind=kind, attempted_residual=residual)
    return Witness(
        kind="numerical_svd",
        xi=xi,
        scale=1.0,
        residual=float(np.linalg.norm(H @ xi)),
        g=g,
        p=p,
        exact=False,
        construction=construction,
    )


def _regression_matrix(ed: ErrorDynamics, G, N: int | None):
    n = ed.n
    window = (n + 1) if N is None else N
    return build_als_matrices(ed, G, window).H


def witness_deficient_l(
    sys: LtiSystem,
    gains: FilterGains,
    ed: ErrorDynamics,
    N: int | None = None,
    tol: float = WITNESS_RESIDUAL_TOL,
    z1=None,
) -> Witness:
    """Witness from a measurement direction the state gain cannot see.

    Takes a unit z1 with L z1 = 0, sets R = z1 z1^T and P = 0; the Lyapunov
    consistency then demands G Q G^T = -K R K^T, solved for vec(Q) through the
    pseudo-inverse of the squared shaping map. Exact whenever G is square
    invertible; otherwise the residual check decides and a numerical null
    vector is substituted if the construction is only formal.
    """
    if z1 is None:
        basis = nullspace(gains.L, DEFAULT_RANK_TOL)
        if basis.shape[1] == 0:
            raise WitnessNotApplicableError("L has full column rank; no null direction exists")
        z1 = basis[:, 0]
    z1 = np.asarray(z1, dtype=float).reshape(sys.p)
    norm = np.linalg.norm(z1)
    if norm == 0.0 or np.linalg.norm(gains.L @ z1) > 1e-8 * norm:
        raise WitnessNotApplicableError("z1 must be a nonzero null vector of L")
    z1 = z1 / norm

    R_dir = np.outer(z1, z1)
    mu = -np.kron(ed.K, ed.K) @ vec(R_dir)
    GG = np.kron(sys.G, sys.G)
    q_s, *_ = np.linalg.lstsq(GG, mu, rcond=None)
    xi_raw = np.concatenate([q_s, vec(R_dir)])
    H = _regression_matrix(ed, sys.G, N)
    return _certify(
        "deficient_L",
        xi_raw,
        H,
        sys.g,
        sys.p,
        {"z1": z1.tolist(), "P": np.zeros((sys.n, sys.n)).tolist(), "mu": mu.tolist()},
        tol,
    )


def witness_singular_a(
    sys: LtiSystem,
    gains: FilterGains,
    ed: ErrorDynamics,
    N: int | None = None,
    tol: float = WITNESS_RESIDUAL_TOL,
    z=None,
) -> Witness:
    """Witness from a null direction of the state matrix.

    Takes z with A z = 0, sets P = z z^T and R = -C P C^T, and solves the
    Lyapunov consistency for vec(Q). Null vectors with C z != 0 are preferred
    so the R component is nonzero; if every null vector of A is unobservable
    the construction still goes through with R = 0 provided the Q component
    survives the residual check.
    """
    if z is None:
        basis = nullspace(sys.A, DEFAULT_RANK_TOL)
        if basis.shape[1] == 0:
            raise WitnessNotApplicableError(
                "A is nonsingular; use the deficient-L construction instead"
            )
        observable = [j for j in range(basis.shape[1]) if np.linalg.norm(sys.C @ basis[:, j]) > 1e-10]
        z = basis[:, observable[0]] if observable else basis[:, 0]
    z = np.asarray(z, dtype=float).reshape(sys.n)
    if np.linalg.norm(z) == 0.0 or np.linalg.norm(sys.A @ z) > 1e-8 * np.linalg.norm(z):
        raise WitnessNotApplicableError("z must be a nonzero null vector of A")

    P = np.outer(z, z)
    R_dir = -sys.C @ P @ sys.C.T
    mu = (np.eye(sys.n**2) - np.kron(ed.A_c, ed.A_c)) @ vec(P) - np.kron(ed.K, ed.K) @ vec(R_dir)
    GG = np.kron(sys.G, sys.G)
    q_s, *_ = np.linalg.lstsq(GG, mu, rcond=None)
    xi_raw = np.concatenate([q_s, vec(R_dir)])
    H = _regression_matrix(ed, sys.G, N)
    return _certify(
        "singular_A",
        xi_raw,
        H,
        sys.g,
        sys.p,
        {"z": z.tolist(), "P": P.tolist(), "mu": mu.tolist()},
        tol,
    )


@dataclass(frozen=True)
class EquivalentPair:
    """Two covariance pairs certified to generate the same autocovariance stack."""

    Q: np.ndarray
    R: np.ndarray
    Q_alt: np.ndarray
    R_alt: np.ndarray
    alpha: float
    feasible_interval: tuple[float, float]
    stack_gap: float  # relative Frobenius gap between the two analytic stacks


def _psd_step_limit(M: np.ndarray, delta: np.ndarray, direction: float, tol: float = 1e-10) -> float:
    """Largest t >= 0 with M + direction*t*delta PSD; the minimum eigenvalue is
    concave in t, so geometric bracketing plus bisection is exact enough."""

    def feasible(t: float) -> bool:
        trial = M + direction * t * delta
        w = np.linalg.eigvalsh(symmetrize(trial))
        scale = max(1.0, float(np.abs(w).max()))
        return w.min() >= -tol * scale

    if np.abs(delta).max() == 0.0:
        return np.inf
    hi = 1.0
    if feasible(1e9):
        w_delta = np.linalg.eigvalsh(symmetrize(direction * delta))
        if w_delta.min() >= -tol:
            return np.inf
        hi = 1e9  # feasible far out but eventually leaves the cone
    while feasible(hi) and hi < 1e12:
        hi *= 4.0
    lo = 0.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if feasible(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return lo


def feasible_alpha_interval(noise: NoiseSpec, witness: Witness) -> tuple[float, float]:
    """Range of alpha keeping both perturbed covariances PSD."""
    dq, dr = witness.q_direction, witness.r_direction
    hi = min(_psd_step_limit(noise.Q, dq, +1.0), _psd_step_limit(noise.R, dr, +1.0))
    lo = -min(_psd_step_limit(noise.Q, dq, -1.0), _psd_step_limit(noise.R, dr, -1.0))
    return (float(lo), float(hi))


def equivalent_covariance_pair(
    ed: ErrorDynamics,
    noise: NoiseSpec,
    witness: Witness,
    alpha: float,
    G,
    N: int,
    tol: float = 1e-9,
) -> EquivalentPair:
    """Perturb (Q, R) along a witness direction and certify indistinguishability.

    Returns the perturbed pair together with the feasible alpha interval and
    the relative gap between the two analytic autocovariance stacks, which
    must be below ``tol``. Raises if alpha leaves the PSD-feasible interval or
    if the stacks fail to agree.
    """
    lo, hi = feasible_alpha_interval(noise, witness)
    slack = 1e-9 * max(1.0, abs(alpha))
    if not (lo - slack <= alpha <= hi + slack):
        raise ValueError(
            f"alpha={alpha} leaves the PSD-feasible interval [{lo:.6g}, {hi:.6g}]"
        )
    if alpha != 0.0 and lo == 0.0 and hi == 0.0:
        raise ValueError("feasible interval is degenerate: no nonzero perturbation keeps both PSD")

    Q_alt = symmetrize(noise.Q + alpha * witness.q_direction)
    R_alt = symmetrize(noise.R + alpha * witness.r_direction)
    stack_ref = analytic_autocov(ed, noise, G, N).stack
    stack_alt = analytic_autocov(
        ed, NoiseSpec(Q_alt, R_alt, allow_singular_r=True), G, N
    ).stack
    denom = max(np.linalg.norm(stack_ref), 1e-30)
    gap = float(np.linalg.norm(stack_alt - stack_ref) / denom)
    if gap > tol:
        raise RuntimeError(
            f"perturbed pair is distinguishable: relative stack gap {gap:.3e} exceeds {tol:.1e}"
        )
    return EquivalentPair(
        Q=noise.Q,
        R=noise.R,
        Q_alt=Q_alt,
        R_alt=R_alt,
        alpha=alpha,
        feasible_interval=(lo, hi),
        stack_gap=gap,
    )


@dataclass(frozen=True)
class Verdict:
    """Per-problem uniqueness verdict.

    ``unique`` is the condition-level answer: it is True only when every
    full-rank clause required for a unique solution holds, which an unbiased
    design can never achieve. ``nullity`` is the measured numerical nullity of
    the corresponding regression block; for a square shaping matrix it is
    always >= 1, while for a tall one the constructive argument can fail to
    produce a null direction and the block may be numerically full rank, which
    ``nullspace_confirmed`` exposes.
    """

    problem: str
    unique: bool
    nullity: int
    violated: tuple[str, ...]

    @property
    def nullspace_confirmed(self) -> bool:
        return self.nullity >= 1

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "unique": self.unique,
            "nullity": self.nullity,
            "violated": list(self.violated),
            "nullspace_confirmed": self.nullspace_confirmed,
        }


@dataclass(frozen=True)
class IdentifiabilityReport:
    ranks: RankReport
    conditions: UniquenessConditions
    verdict_joint: Verdict
    verdict_q_only: Verdict
    verdict_r_only: Verdict
    witnesses: tuple[Witness, ...]
    N: int

    def to_dict(self) -> dict:
        return {
            "ranks": self.ranks.to_dict(),
            "conditions": self.conditions.to_dict(),
            "verdicts": {
                "joint": self.verdict_joint.to_dict(),
                "q_only": self.verdict_q_only.to_dict(),
                "r_only": self.verdict_r_only.to_dict(),
            },
            "witnesses": [w.to_dict() for w in self.witnesses],
            "N": self.N,
        }

    def to_text(self) -> str:
        r = self.ranks
        c = self.conditions
        lines = [
            f"rank(H)={r.rank_h}, rank(H1)={r.rank_h1}, rank(H2)={r.rank_h2}",
            f"nullities: H={r.nullity_h}, H1={r.nullity_h1}, H2={r.nullity_h2} (tol={r.tol:g})",
            (
                f"full-rank clauses: rank(A)={c.rank_a}/{c.n} "
                f"{'ok' if c.a_full else 'violated'}, rank(C)={c.rank_c}/{c.n} "
                f"{'ok' if c.c_full else 'violated'}, rank(L)={c.rank_l}/{c.p} "
                f"{'ok' if c.l_full else 'violated'}"
            ),
            (
                f"structural bound: L D = 0 with rank(D)={c.q} forces "
                f"rank(L) <= {c.rank_l_bound} < {c.p}"
            ),
        ]
        for v in (self.verdict_joint, self.verdict_q_only, self.verdict_r_only):
            label = {"joint": "joint problem", "q_only": "Q-only problem", "r_only": "R-only problem"}[v.problem]
            note = "" if v.nullspace_confirmed else " [numerically full rank: null direction blocked by the shaping map]"
            lines.append(f"{label}: not uniquely identifiable (nullity {v.nullity}){note}")
        for w in self.witnesses:
            lines.append(
                f"witness [{w.kind}]: |H xi| = {w.residual:.3e}"
                + ("" if w.exact else " (construction inexact, numerical fallback)")
            )
        return "\n".join(lines)


def build_identifiability_report(
    sys: LtiSystem,
    gains: FilterGains,
    ed: ErrorDynamics,
    N: int,
    tol: float = DEFAULT_RANK_TOL,
) -> IdentifiabilityReport:
    """Run the full diagnostic: ranks, condition clauses, verdicts, witnesses."""
    mats = build_als_matrices(ed, sys.G, N)
    ranks = rank_report(mats.H, mats.H1, mats.H2, tol)
    conds = check_uniqueness_conditions(sys, gains, tol)

    violated = tuple(
        name
        for name, ok in (
            ("rank(A)=n", conds.a_full),
            ("rank(C)=n", conds.c_full),
            ("rank(L)=p", conds.l_full),
        )
        if not ok
    )
    # rank(L) = p is necessary for all three problems, so the verdicts follow
    # from the clause evaluation; the numerical nullities ride along as evidence
    joint = Verdict("joint", conds.all_satisfied, ranks.nullity_h, violated)
    single_violated = ("rank(L)=p",) if not conds.l_full else ()
    q_only = Verdict("q_only", conds.l_full, ranks.nullity_h1, single_violated)
    r_only = Verdict("r_only", conds.l_full, ranks.nullity_h2, single_violated)

    witnesses = []
    try:
        witnesses.append(witness_deficient_l(sys, gains, ed, N))
    except WitnessNotApplicableError:
        pass
    try:
        witnesses.append(witness_singular_a(sys, gains, ed, N))
    except WitnessNotApplicableError:
        pass
    return IdentifiabilityReport(
        ranks=ranks,
        conditions=conds,
        verdict_joint=joint,
        verdict_q_only=q_only,
        verdict_r_only=r_only,
        witnesses=tuple(witnesses),
        N=N,
    )
