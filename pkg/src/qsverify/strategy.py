"""Homogeneous verification strategies and pass-rate fidelity estimation.

A homogeneous strategy tests copies of a two-qubit state against a target
pure state |T> using a weighted set of projective tests.  Its verification
operator Omega = sum_i w_i P_i has the special form

    Omega = |T><T| + lam * (1 - |T><T|),    0 <= lam < 1,

so the single-copy pass probability tr(Omega s) determines the fidelity
<T|s|T> exactly:  tr(Omega s) = lam + (1 - lam) <T|s|T>.

The singlet instance uses the three Pauli tests XX, YY, ZZ with equal weight;
each test passes on the -1 outcome, i.e. projects onto the negative eigenspace
of the corresponding Pauli product.  Since W (x) W is an involution, that
projector is (1 - W(x)W)/2 exactly, which avoids any eigensolver.

Strategy objects are immutable and shareable across threads; sampling
functions take a caller-owned ``numpy.random.Generator``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import (
    ComplexMatrix,
    DensityMatrix,
    I4,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    PureState,
    expectation,
    identity,
    kron,
    phased_singlet,
    projector,
)

logger = logging.getLogger(__name__)

# Constructor invariant tolerances.
WEIGHT_TOL = 1e-12
OMEGA_TOL = 1e-12
HOMOGENEITY_TOL = 1e-10
CLAMP_LOG_TOL = 1e-10


@dataclass(frozen=True)
class StrategyTest:
    """One projective test: pass with probability tr(projector * state)."""

    label: str
    proj: ComplexMatrix
    weight: float

    def __post_init__(self):
        if not (0.0 <= self.weight <= 1.0):
            raise ValueError(f"test weight {self.weight} outside [0, 1]")
        if not self.proj.is_hermitian():
            raise ValueError(f"test projector {self.label!r} is not Hermitian")
        sq = self.proj.data @ self.proj.data
        if np.max(np.abs(sq - self.proj.data)) > 1e-10:
            raise ValueError(f"test projector {self.label!r} is not idempotent")


@dataclass(frozen=True)
class TestResult:
    setting_label: str
    passed: bool


@dataclass(frozen=True)
class HomogeneousStrategy:
    tests: tuple[StrategyTest, ...]
    target: PureState
    lam: float
    nu: float
    omega: ComplexMatrix

    def __post_init__(self):
        object.__setattr__(self, "tests", tuple(self.tests))
        if not (0.0 <= self.lam < 1.0):
            raise ValueError(f"lambda {self.lam} outside [0, 1)")
        if self.nu != 1.0 - self.lam:
            raise ValueError("nu must equal 1 - lambda exactly")
        total = sum(t.weight for t in self.tests)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"test weights sum to {total}, not 1")
        acc = sum((t.weight * t.proj.data for t in self.tests), np.zeros((4, 4), complex))
        if np.max(np.abs(acc - self.omega.data)) > OMEGA_TOL:
            raise ValueError("omega does not match the weighted sum of test projectors")
        tvec = self.target.vec
        if np.max(np.abs(self.omega.data @ tvec - tvec)) > HOMOGENEITY_TOL:
            raise ValueError("target state does not pass every test with certainty")
        ptarget = np.outer(tvec, tvec.conj())
        homog = ptarget + self.lam * (np.eye(4) - ptarget)
        if np.max(np.abs(self.omega.data - homog)) > HOMOGENEITY_TOL:
            raise ValueError(
                "strategy is not homogeneous: omega != P_target + lambda (1 - P_target)"
            )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.tests)

    @property
    def weights(self) -> np.ndarray:
        w = np.array([t.weight for t in self.tests], dtype=float)
        w.setflags(write=False)
        return w


def build_singlet_strategy() -> HomogeneousStrategy:
    """The XX/YY/ZZ strategy for the singlet (|01> - |10>)/sqrt(2); lambda = 1/3."""
    target = phased_singlet(0.0)
    tests = []
    for label, pauli in (("XX", PAULI_X), ("YY", PAULI_Y), ("ZZ", PAULI_Z)):
        neg = ComplexMatrix((I4.data - kron(pauli, pauli).data) / 2.0)
        tests.append(StrategyTest(label, neg, 1.0 / 3.0))
    omega = ComplexMatrix(sum(t.proj.data for t in tests) / 3.0)
    lam = 1.0 / 3.0
    return HomogeneousStrategy(tuple(tests), target, lam, 1.0 - lam, omega)


def build_homogeneous_strategy(target: PureState, lam: float) -> HomogeneousStrategy:
    """A synthetic homogeneous strategy with an arbitrary lambda in [0, 1).

    Two tests realize Omega = |T><T| + lam (1 - |T><T|): the trivial
    always-pass test (identity projector) with weight lam, and the projector
    onto the target with weight 1 - lam.
    """
    if not (0.0 <= lam < 1.0):
        raise ValueError(f"lambda {lam} outside [0, 1)")
    ptarget = projector(target).mat
    tests = (
        StrategyTest("ALL", identity(4), lam),
        StrategyTest("TARGET", ptarget, 1.0 - lam),
    )
    omega = ComplexMatrix(lam * np.eye(4) + (1.0 - lam) * ptarget.data)
    return HomogeneousStrategy(tests, target, lam, 1.0 - lam, omega)


def pass_probability(strat: HomogeneousStrategy, s: DensityMatrix) -> float:
    """Single-test pass probability tr(Omega s), clamped to [0, 1]."""
    value = expectation(strat.omega, s)
    if value < -CLAMP_LOG_TOL or value > 1.0 + CLAMP_LOG_TOL:
        logger.warning("pass probability %.17g clamped to [0, 1]", value)
    return min(1.0, max(0.0, value))


def test_pass_probabilities(strat: HomogeneousStrategy, s: DensityMatrix) -> np.ndarray:
    """Per-test pass probabilities tr(P_i s), clamped to [0, 1]."""
    probs = np.array([expectation(t.proj, s) for t in strat.tests])
    bad = np.max(np.abs(probs - np.clip(probs, 0.0, 1.0)))
    if bad > CLAMP_LOG_TOL:
        logger.warning("per-test probability clamped by %.3g", bad)
    return np.clip(probs, 0.0, 1.0)


def sample_tests(
    strat: HomogeneousStrategy,
    s: DensityMatrix,
    size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` independent tests on state ``s``.

    Returns (setting indices, pass booleans).  The setting is drawn first
    according to the strategy weights, then the outcome conditioned on the
    setting, mirroring how a run chooses a random measurement before seeing
    the result.
    """
    probs = test_pass_probabilities(strat, s)
    settings = rng.choice(len(strat.tests), size=size, p=strat.weights)
    passed = rng.random(size) < probs[settings]
    return settings, passed


def sample_test(
    strat: HomogeneousStrategy, s: DensityMatrix, rng: np.random.Generator
) -> TestResult:
    """Draw a single test on state ``s``."""
    settings, passed = sample_tests(strat, s, 1, rng)
    return TestResult(strat.tests[int(settings[0])].label, bool(passed[0]))


def fidelity_from_pass_rate(rate: float, lam: float) -> float:
    """Invert the pass rate into a fidelity estimate: (rate - lam) / (1 - lam).

    The result may be negative when rate < lam; it is reported as-is so the
    caller can decide how to treat unphysical estimates.
    """
    if not (0.0 <= lam < 1.0):
        raise ValueError(f"lambda {lam} outside [0, 1)")
    if not (0.0 <= rate <= 1.0):
        raise ValueError(f"pass rate {rate} outside [0, 1]")
    return (rate - lam) / (1.0 - lam)
