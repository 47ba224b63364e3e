import math

import numpy as np
import pytest

from qsverify.linalg import overlap, phased_singlet, projector
from qsverify.sources import (
    NoiseSpec,
    ProductSequence,
    ProductSequenceMixture,
    depolarized_state,
    honest_iid,
    maximally_mixed,
    mixture_from_spec,
    parse_angle,
    parse_state,
    rho1,
    rho2,
    sample_sequence,
    unconditional_fidelity,
    werner_state,
    worst_case_state,
)
from qsverify.strategy import build_singlet_strategy, pass_probability


@pytest.fixture(scope="module")
def strat():
    return build_singlet_strategy()


def test_werner_extremes(strat):
    ideal = werner_state(1.0)
    assert ideal.mat.allclose(projector(phased_singlet(0.0)).mat, tol=1e-12)
    mixed = werner_state(0.25)
    assert mixed.mat.allclose(maximally_mixed().mat, tol=1e-12)
    with pytest.raises(ValueError):
        werner_state(0.2)


def test_werner_pass_probability(strat):
    assert pass_probability(strat, werner_state(0.98)) == pytest.approx(
        1 / 3 + (2 / 3) * 0.98, abs=1e-6
    )


def test_honest_iid_structure(strat):
    m = honest_iid(6, NoiseSpec(0.98))
    assert m.num_systems == 6
    assert len(m.branches) == 1
    w, seq = m.branches[0]
    assert w == 1.0
    for s in seq.states:
        assert overlap(strat.target, s) == pytest.approx(0.98, abs=1e-12)
    with pytest.raises(ValueError):
        honest_iid(1)
    with pytest.raises(ValueError):
        honest_iid(5, NoiseSpec(0.1))


def test_rho1_branch_weights_and_reduced_fidelity(strat):
    m = rho1(4)
    assert [w for w, _ in m.branches] == pytest.approx([2 / 3, 1 / 3], abs=1e-15)
    assert unconditional_fidelity(m, strat.target) == pytest.approx(0.75, abs=1e-10)
    noisy = rho1(4, NoiseSpec(0.98))
    assert unconditional_fidelity(noisy, strat.target) == pytest.approx(
        (2 / 3) * 0.98 + (1 / 3) * 0.25, abs=1e-4
    )


def test_rho2_phi_zero_matches_honest(strat):
    m = rho2(3, 0.0)
    honest = honest_iid(4)
    for _, seq in m.branches:
        for s, h in zip(seq.states, honest.branches[0][1].states):
            assert s.mat.allclose(h.mat, tol=1e-12)


def test_rho2_pi_odd_copy_orthogonal(strat):
    # <S | S(pi)> = 0, so the rotated copy carries zero target fidelity
    assert abs(np.vdot(phased_singlet(0.0).vec, phased_singlet(math.pi).vec)) < 1e-12
    m = rho2(5, math.pi)
    assert len(m.branches) == 6
    assert unconditional_fidelity(m, strat.target) == pytest.approx(5 / 6, abs=1e-10)
    for slot, (w, seq) in enumerate(m.branches):
        assert w == pytest.approx(1 / 6, abs=1e-15)
        assert overlap(strat.target, seq.states[slot]) == pytest.approx(0.0, abs=1e-10)


def test_rho2_intermediate_phase_fidelity(strat):
    # |<S|S(phi)>|^2 = cos^2(phi/2)
    for phi in (0.3, math.pi / 2, 2.4):
        m = rho2(4, phi)
        expected = (4 + math.cos(phi / 2) ** 2) / 5
        assert unconditional_fidelity(m, strat.target) == pytest.approx(expected, abs=1e-10)


def test_rho2_permutation_covariance():
    # permuting the system slots maps the branch set onto itself
    m = rho2(4, 1.1)
    rng = np.random.default_rng(0)
    perm = rng.permutation(5)

    def branch_key(seq):
        return tuple(s.mat.data.round(9).tobytes() for s in seq.states)

    original = sorted(branch_key(seq) for _, seq in m.branches)
    permuted = sorted(
        branch_key(ProductSequence(tuple(seq.states[i] for i in perm)))
        for _, seq in m.branches
    )
    assert original == permuted


def test_all_factors_are_valid_density_matrices():
    for m in (rho1(3, NoiseSpec(0.9)), rho2(3, 2.0, NoiseSpec(0.8)), honest_iid(4)):
        for w, seq in m.branches:
            assert w >= 0
            for s in seq.states:
                eigs = np.linalg.eigvalsh(s.mat.data)
                assert eigs.min() > -1e-10
                assert abs(np.trace(s.mat.data) - 1) < 1e-10


def test_mixture_validation():
    seq = ProductSequence((maximally_mixed(), maximally_mixed()))
    with pytest.raises(ValueError):
        ProductSequenceMixture(((0.5, seq),))  # weights don't sum to 1
    with pytest.raises(ValueError):
        ProductSequence((maximally_mixed(),))  # too short
    long_seq = ProductSequence((maximally_mixed(),) * 3)
    with pytest.raises(ValueError):
        ProductSequenceMixture(((0.5, seq), (0.5, long_seq)))  # unequal lengths


def test_sample_sequence_single_branch():
    m = honest_iid(4)
    rng = np.random.default_rng(1)
    for _ in range(10):
        idx, seq = sample_sequence(m, rng)
        assert idx == 0
        assert seq is m.branches[0][1]


def test_sample_sequence_rho1_frequency():
    m = rho1(2)
    rng = np.random.default_rng(2)
    draws = 100_000
    hits = sum(sample_sequence(m, rng)[0] == 0 for _ in range(draws))
    p = 2 / 3
    sigma = math.sqrt(p * (1 - p) / draws)
    assert abs(hits / draws - p) < 4 * sigma


def test_sample_sequence_rho2_uniform():
    m = rho2(5, math.pi)
    rng = np.random.default_rng(3)
    draws = 100_000
    counts = np.zeros(6)
    for _ in range(draws):
        counts[sample_sequence(m, rng)[0]] += 1
    p = 1 / 6
    sigma = math.sqrt(p * (1 - p) / draws)
    assert np.max(np.abs(counts / draws - p)) < 4 * sigma


def test_ideal_singlet_branches_pass_surely(strat):
    # rho1's singlet branch, every rho2 branch, and the honest source all
    # consist of perfect singlet copies when phi = 0 and prep is ideal
    singlet_branch = rho1(3).branches[0][1]
    sources_states = list(singlet_branch.states)
    for _, seq in rho2(3, 0.0).branches:
        sources_states.extend(seq.states)
    sources_states.extend(honest_iid(4).branches[0][1].states)
    for s in sources_states:
        assert pass_probability(strat, s) == pytest.approx(1.0, abs=1e-10)


def test_worst_case_state_saturates_pass_probability(strat):
    for eps in (0.0, 0.1, 0.5, 1.0):
        tau = worst_case_state(eps, strat)
        assert pass_probability(strat, tau) == pytest.approx(
            1.0 - strat.nu * eps, abs=1e-10
        )
        assert overlap(strat.target, tau) == pytest.approx(1.0 - eps, abs=1e-10)


def test_depolarized_phased_singlet_self_fidelity():
    phi = 2.1
    s = depolarized_state(phased_singlet(phi), 0.9)
    assert overlap(phased_singlet(phi), s) == pytest.approx(0.9, abs=1e-12)


def test_parse_angle():
    assert parse_angle("pi") == pytest.approx(math.pi)
    assert parse_angle("pi/2") == pytest.approx(math.pi / 2)
    assert parse_angle("3pi/4") == pytest.approx(3 * math.pi / 4)
    assert parse_angle("0.5") == 0.5
    assert parse_angle(1.25) == 1.25
    assert parse_angle("-pi") == pytest.approx(-math.pi)


def test_parse_state_descriptors(strat):
    assert parse_state("singlet").mat.allclose(projector(strat.target).mat)
    assert parse_state("mixed").mat.allclose(maximally_mixed().mat)
    assert parse_state("werner(0.9)").mat.allclose(werner_state(0.9).mat)
    assert parse_state("singlet_phi(pi)").mat.allclose(
        projector(phased_singlet(math.pi)).mat, tol=1e-12
    )
    with pytest.raises(ValueError):
        parse_state("bogus(3)")
    with pytest.raises(ValueError):
        parse_state("werner")


def test_mixture_from_spec(strat):
    spec = {
        "branches": [
            {"weight": 0.25, "states": ["singlet", "werner(0.9)", "mixed"]},
            {"weight": 0.75, "states": ["singlet_phi(pi/2)", "singlet", "singlet"]},
        ]
    }
    m = mixture_from_spec(spec)
    assert m.num_systems == 3
    assert m.weights.tolist() == [0.25, 0.75]
    with pytest.raises(ValueError):
        mixture_from_spec({"branches": []})
    with pytest.raises(ValueError):
        mixture_from_spec({"branches": [{"weight": 1.0}]})
