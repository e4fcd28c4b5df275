"""Plant trajectory generation and the empirical innovation pipeline.

Unknown-input signals have no statistical model; the generator menu here
(zero, step, sinusoid, random walk, explicit) exists purely to drive
simulations. All randomness flows from explicit seeds, and replicate seeds
should be derived from a root seed with ``numpy.random.SeedSequence.spawn``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtering import FilterGains, run_filter
from .linalg import psd_factor
from .systems import LtiSystem, NoiseSpec


@dataclass(frozen=True)
class UnknownInputSignal:
    """Declarative description of an unknown-input sequence.

    ``kind`` is one of "zero", "step", "sinusoid", "random_walk", "explicit".
    Step time is 1-based: step(time=3, level) is zero at k=1,2 and level from
    k=3 on.
    """

    kind: str
    time: int = 0
    level: np.ndarray | None = None
    amplitude: np.ndarray | None = None
    period: float = 0.0
    phase: float = 0.0
    step_cov: np.ndarray | None = None
    seed: int = 0
    values: np.ndarray | None = None

    @classmethod
    def zero(cls) -> "UnknownInputSignal":
        return cls(kind="zero")

    @classmethod
    def step(cls, time: int, level) -> "UnknownInputSignal":
        return cls(kind="step", time=time, level=np.atleast_1d(np.asarray(level, dtype=float)))

    @classmethod
    def sinusoid(cls, amplitude, period: float, phase: float = 0.0) -> "UnknownInputSignal":
        return cls(
            kind="sinusoid",
            amplitude=np.atleast_1d(np.asarray(amplitude, dtype=float)),
            period=float(period),
            phase=float(phase),
        )

    @classmethod
    def random_walk(cls, step_cov, seed: int = 0) -> "UnknownInputSignal":
        return cls(kind="random_walk", step_cov=np.atleast_2d(np.asarray(step_cov, dtype=float)), seed=seed)

    @classmethod
    def explicit(cls, values) -> "UnknownInputSignal":
        return cls(kind="explicit", values=np.atleast_2d(np.asarray(values, dtype=float)))


def parse_input_spec(text: str, q: int) -> UnknownInputSignal:
    """Parse the CLI grammar for input signals.

    zero | step:<time>:<v1,v2,...> | sin:<a1,a2,...>:<period>[:<phase>]
    | walk:<var>[:<seed>] | file:<path.csv>
    """
    parts = text.split(":")
    kind = parts[0]
    if kind == "zero":
        return UnknownInputSignal.zero()
    if kind == "step":
        if len(parts) != 3:
            raise ValueError(f"step spec must be step:<time>:<levels>, got {text!r}")
        return UnknownInputSignal.step(int(parts[1]), [float(v) for v in parts[2].split(",")])
    if kind == "sin":
        if len(parts) not in (3, 4):
            raise ValueError(f"sinusoid spec must be sin:<amps>:<period>[:<phase>], got {text!r}")
        phase = float(parts[3]) if len(parts) == 4 else 0.0
        return UnknownInputSignal.sinusoid([float(v) for v in parts[1].split(",")], float(parts[2]), phase)
    if kind == "walk":
        if len(parts) not in (2, 3):
            raise ValueError(f"walk spec must be walk:<var>[:<seed>], got {text!r}")
        seed = int(parts[2]) if len(parts) == 3 else 0
        return UnknownInputSignal.random_walk(float(parts[1]) * np.eye(q), seed)
    if kind == "file":
        values = np.loadtxt(parts[1], delimiter=",", ndmin=2)
        return UnknownInputSignal.explicit(values)
    raise ValueError(f"unknown input signal kind {kind!r}")


def generate_unknown_input(spec: UnknownInputSignal, n_steps: int, q: int) -> np.ndarray:
    """Materialize the signal as an (n_steps, q) array; deterministic given the spec."""
    if spec.kind == "zero":
        return np.zeros((n_steps, q))
    if spec.kind == "step":
        level = np.asarray(spec.level, dtype=float).reshape(q)
        d = np.zeros((n_steps, q))
        start = max(spec.time - 1, 0)  # 1-based activation time
        d[start:] = level
        return d
    if spec.kind == "sinusoid":
        amp = np.asarray(spec.amplitude, dtype=float).reshape(q)
        k = np.arange(n_steps)[:, None]
        return amp * np.sin(2.0 * np.pi * k / spec.period + spec.phase)
    if spec.kind == "random_walk":
        cov = np.asarray(spec.step_cov, dtype=float)
        if cov.shape != (q, q):
            raise ValueError(f"step covariance must be {q}x{q}, got {cov.shape}")
        rng = np.random.default_rng(spec.seed)
        steps = rng.standard_normal((n_steps, q)) @ psd_factor(cov).T
        return np.cumsum(steps, axis=0)
    if spec.kind == "explicit":
        values = np.asarray(spec.values, dtype=float)
        if values.shape != (n_steps, q):
            raise ValueError(f"explicit sequence must be ({n_steps}, {q}), got {values.shape}")
        return values.copy()
    raise ValueError(f"unknown input signal kind {spec.kind!r}")


@dataclass(frozen=True)
class Trajectory:
    """A simulated plant run with the noises retained for oracle checks.

    States have length N+1 (including the terminal state); outputs, inputs,
    and noises have length N. The stored noises make the run replayable with
    zero error.
    """

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    w: np.ndarray
    v: np.ndarray
    seed: int

    def __len__(self) -> int:
        return self.y.shape[0]

    def to_csv(self, path) -> None:
        n = self.x.shape[1]
        p = self.y.shape[1]
        q = self.d.shape[1]
        header = (
            ["k"]
            + [f"x{i + 1}" for i in range(n)]
            + [f"y{i + 1}" for i in range(p)]
            + [f"d{i + 1}" for i in range(q)]
        )
        ks = np.arange(1, len(self) + 1)[:, None]
        table = np.hstack([ks, self.x[:-1], self.y, self.d])
        np.savetxt(path, table, delimiter=",", header=",".join(header), comments="")


def simulate_plant(
    sys: LtiSystem,
    noise: NoiseSpec,
    d,
    x0=None,
    seed: int = 0,
) -> Trajectory:
    """Roll the plant forward under a given input sequence and sampled noises.

    Q may be singular (its factor clamps zero modes); R must be positive
    definite for the measurement noise factorization.
    """
    d = np.asarray(d, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if d.shape[1] != sys.q:
        raise ValueError(f"input sequence must be (N, {sys.q}), got {d.shape}")
    steps = d.shape[0]
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).reshape(sys.n)

    rng = np.random.default_rng(seed)
    Sq = psd_factor(noise.Q)
    if noise.allow_singular_r:
        Sr = psd_factor(noise.R)
    else:
        try:
            Sr = np.linalg.cholesky(noise.R)
        except np.linalg.LinAlgError as exc:
            raise ValueError("R must be positive definite to sample measurement noise") from exc
    w = rng.standard_normal((steps, sys.g)) @ Sq.T
    v = rng.standard_normal((steps, sys.p)) @ Sr.T

    x = np.zeros((steps + 1, sys.n))
    y = np.zeros((steps, sys.p))
    x[0] = x0
    A, B, G, C, D = sys.A, sys.B, sys.G, sys.C, sys.D
    for k in range(steps):
        y[k] = C @ x[k] + D @ d[k] + v[k]
        x[k + 1] = A @ x[k] + B @ d[k] + G @ w[k]
    return Trajectory(x=x, y=y, d=d.copy(), w=w, v=v, seed=seed)


def innovation_sequence(
    sys: LtiSystem,
    gains: FilterGains,
    traj: Trajectory,
    x0_hat=None,
) -> np.ndarray:
    """Transformed innovations of the filter run on a simulated trajectory.

    The default initial guess is the trajectory's true initial state, which
    keeps the run unbiased from the first step.
    """
    guess = traj.x[0] if x0_hat is None else x0_hat
    return run_filter(sys, gains, traj.y, guess).transformed


def innovations_to_csv(innovations, path) -> None:
    Y = np.asarray(innovations, dtype=float)
    header = ["k"] + [f"Y{i + 1}" for i in range(Y.shape[1])]
    ks = np.arange(1, Y.shape[0] + 1)[:, None]
    np.savetxt(path, np.hstack([ks, Y]), delimiter=",", header=",".join(header), comments="")
