"""Shared fixtures: the two-state benchmark plant and random valid systems."""

import numpy as np
import pytest

from uials import (
    DesignOptions,
    GainDesignError,
    LtiSystem,
    NoiseSpec,
    check_strong_detectability,
    design_gains,
    make_gains,
    validate_system,
)
from uials.linalg import spectral_radius


@pytest.fixture
def benchmark_system() -> LtiSystem:
    """Two-state integrator-like plant with scalar unknown input and full feedthrough."""
    return LtiSystem(
        A=np.array([[1.0, 1.0], [0.0, 1.0]]),
        B=np.array([[0.0], [1.0]]),
        G=np.eye(2),
        C=np.array([[1.0, 2.0], [1.0, 1.0]]),
        D=np.array([[1.0], [0.0]]),
    )


@pytest.fixture
def benchmark_gains(benchmark_system):
    return make_gains(benchmark_system, [[1.0, 0.5]], [[0.0, -1.0], [0.0, 0.0]])


@pytest.fixture
def unit_noise() -> NoiseSpec:
    return NoiseSpec(np.eye(2), np.eye(2))


def random_valid_system(rng, n_max=4, square_g=False):
    """Draw a strongly detectable plant with stabilized unbiased gains.

    The state-input map is shrunk geometrically toward zero until the
    invariant zeros fall back inside the unit disc; with a stable A the
    shrink always terminates.
    """
    while True:
        n = int(rng.integers(2, n_max + 1))
        p = int(rng.integers(1, n + 1))
        q = int(rng.integers(1, p + 1))
        g = n if square_g else int(rng.integers(1, n + 1))
        A_raw = rng.standard_normal((n, n))
        A = A_raw * rng.uniform(0.3, 0.9) / max(spectral_radius(A_raw), 1e-9)
        C = rng.standard_normal((p, n))
        G = rng.standard_normal((n, g))
        D = rng.standard_normal((p, q))
        B0 = rng.standard_normal((n, q))
        for beta in (1.0, 0.5, 0.2, 0.05, 0.0):
            sys = LtiSystem(A=A, B=beta * B0, G=G, C=C, D=D)
            if not validate_system(sys).overall:
                break
            if not check_strong_detectability(sys, seed=int(rng.integers(2**31))).strongly_detectable:
                continue
            try:
                gains = design_gains(sys, DesignOptions(seed=int(rng.integers(2**31))))
            except GainDesignError:
                continue
            return sys, gains


def random_psd(rng, size, definite=False):
    root = rng.standard_normal((size, size))
    m = root @ root.T
    return m + np.eye(size) if definite else m
