import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings, strategies as st

from beable_lab.bell import jump_rates
from beable_lab.discrete import (
    DiscreteTrajectory,
    TransitionMatrix,
    iid_chain,
    iid_step,
    remainder_bound,
    restricted_step,
    restricted_step_ensemble,
    restricted_transition_matrix,
    restricted_transition_ode,
    restricted_transition_series,
    two_state_chain_ensemble,
    two_state_transition,
)
from beable_lab.errors import DimensionError
from beable_lab.hilbert import (
    Decomposition,
    HermitianOperator,
    StateVector,
    born_distribution,
    evolve_discrete,
    haar_random_unitary,
    principal_log_hamiltonian,
    random_hermitian,
    random_state,
)

SIGMA_X = HermitianOperator([[0, 1], [1, 0]])
TWO = Decomposition.singletons(2)
seeds = st.integers(0, 2**32 - 1)


def test_transition_matrix_validation():
    with pytest.raises(ValueError):
        TransitionMatrix([[0.5, 0.0], [0.4, 1.0]])
    with pytest.raises(ValueError):
        TransitionMatrix([[1.2, 0.0], [-0.2, 1.0]])


def test_discrete_trajectory_validation():
    with pytest.raises(ValueError):
        DiscreteTrajectory([], 0.1)
    with pytest.raises(ValueError):
        DiscreteTrajectory([0], 0.0)


def test_restricted_step_without_coupling():
    H = HermitianOperator(np.diag([0.3, 1.0, 2.0]))
    dec = Decomposition.singletons(3)
    psi = random_state(3, 0)
    assert all(restricted_step(H, dec, psi, 1, 0.7, seed=s) == 1 for s in range(20))
    P, _, _ = restricted_transition_matrix(H, dec, psi, 0.7)
    np.testing.assert_allclose(P, np.eye(3), atol=1e-14)


def test_restricted_step_matches_ensemble_member():
    rng = np.random.default_rng(1)
    H, psi, dec = random_hermitian(3, rng), random_state(3, rng), Decomposition.singletons(3)
    ens = restricted_step_ensemble(H, dec, psi, 0.5, 30, seed=4, q_from=2)
    assert restricted_step(H, dec, psi, 2, 0.5, seed=4, run_index=17) == ens[17]


def test_zero_jump_term_is_survival():
    rng = np.random.default_rng(2)
    H, psi, dec = random_hermitian(3, rng), random_state(3, rng), Decomposition.singletons(3)
    from beable_lab.hilbert import evolve_continuous

    def total_rate(s):
        return jump_rates(evolve_continuous(H, psi, s), H, dec).total()[1]

    integral = scipy.integrate.quad(total_rate, 0, 0.4, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    res = restricted_transition_series(H, dec, psi, 1, 1, 0.4, n_max=0)
    assert res.probability == pytest.approx(np.exp(-integral), abs=1e-10)


def test_series_agrees_with_forward_equation():
    rng = np.random.default_rng(3)
    H, psi, dec = random_hermitian(4, rng), random_state(4, rng), Decomposition.singletons(4)
    P12, _, _ = restricted_transition_matrix(H, dec, psi, 0.3, n_max=12)
    P_ode = restricted_transition_ode(H, dec, psi, 0.3)
    np.testing.assert_allclose(P12, P_ode, atol=1e-9)
    np.testing.assert_allclose(P12.sum(axis=0), 1, atol=1e-9)


def test_series_remainder_bound():
    assert remainder_bound(2.0, 0.1, 3) == pytest.approx(0.2**4 / 24)
    res = restricted_transition_series(SIGMA_X, TWO, StateVector([1, 0]), 0, 1, 0.2, n_max=3)
    assert res.accurate and res.remainder_bound < 1e-4
    assert len(res.terms) == 4 and res.terms[0] == 0.0


def test_series_flags_inaccurate_bound():
    res = restricted_transition_series(SIGMA_X, TWO, StateVector([1, 0]), 0, 1, 1.4, n_max=1, accuracy=1e-6)
    assert not res.accurate


def test_series_rejects_negative_order():
    with pytest.raises(ValueError):
        restricted_transition_matrix(SIGMA_X, TWO, StateVector([1, 0]), 0.2, n_max=-1)


def test_rabi_series_closed_form():
    # from config 0 at t=0 with psi=(1,0): P(0->1 in [0, tau]) = sin^2 tau, no jumps back since flow is one-way
    res = restricted_transition_series(SIGMA_X, TWO, StateVector([1, 0]), 0, 1, 0.2, n_max=3)
    assert res.probability == pytest.approx(np.sin(0.2) ** 2, abs=1e-10)


def test_restricted_ensemble_equivariance_small():
    rng = np.random.default_rng(5)
    H, psi, dec = random_hermitian(3, rng), random_state(3, rng), Decomposition.singletons(3)
    n = 20_000
    ends = restricted_step_ensemble(H, dec, psi, 0.6, n, seed=9)
    emp = np.bincount(ends, minlength=3) / n
    from beable_lab.hilbert import evolve_continuous

    born = born_distribution(evolve_continuous(H, psi, 0.6), dec).weights
    assert np.all(np.abs(emp - born) <= 4 * np.sqrt(born * (1 - born) / n))


def test_two_state_commuting_unitary_is_identity():
    T = two_state_transition(random_state(2, 1), np.diag([1j, -1]), TWO)
    np.testing.assert_array_equal(T.probs, np.eye(2))


@pytest.mark.parametrize("theta", [0.1, 0.7, 1.3])
def test_two_state_rabi_hand_computation(theta):
    U = scipy.linalg.expm(-1j * theta * SIGMA_X.matrix)
    T = two_state_transition(StateVector([1, 0]), U, TWO)
    assert T.probs[1, 0] == pytest.approx(np.sin(theta) ** 2, abs=1e-14)
    assert T.probs[0, 1] == 0 and T.flagged == (1,)


def test_two_state_rejects_three_configs():
    with pytest.raises(DimensionError):
        two_state_transition(random_state(3, 0), haar_random_unitary(3, 0), Decomposition.singletons(3))


@given(d=st.integers(2, 6), seed=seeds)
@settings(max_examples=80, deadline=None)
def test_two_state_equivariance_and_minimality(d, seed):
    rng = np.random.default_rng(seed)
    U, psi = haar_random_unitary(d, rng), random_state(d, rng)
    cut = int(rng.integers(1, d))
    perm = rng.permutation(d)
    dec = Decomposition((tuple(sorted(perm[:cut].tolist())), tuple(sorted(perm[cut:].tolist()))))
    T = two_state_transition(psi, U, dec)
    w = born_distribution(psi, dec).weights
    w_next = born_distribution(evolve_discrete(U, psi), dec).weights
    np.testing.assert_allclose(T.apply(w), w_next, atol=1e-12)
    assert T.probs[1, 0] * T.probs[0, 1] == 0
    # net current of the matrix equals the change of the Born weights
    flux = T.probs * w[None, :]
    assert (flux[1, 0] - flux[0, 1]) == pytest.approx(w_next[1] - w[1], abs=1e-12)


def test_two_state_chain_marginals():
    U = scipy.linalg.expm(-1j * 0.3 * SIGMA_X.matrix)
    psi = StateVector.normalized([1, 0.5j])
    configs, born = two_state_chain_ensemble(U, TWO, psi, 8, 20_000, seed=2)
    emp = configs.mean(axis=0)
    assert np.all(np.abs(emp - born[:, 1]) <= 4 * np.sqrt(born[:, 1] * born[:, 0] / 20_000) + 1e-12)


def test_iid_basis_state():
    assert all(iid_step(StateVector([0, 0, 1]), Decomposition.singletons(3), seed=s) == 2 for s in range(20))


def test_iid_symmetric_frequencies():
    psi = StateVector.normalized([1, 1])
    draws = np.array([iid_step(psi, TWO, seed=7, run_index=r) for r in range(20_000)])
    assert abs(draws.mean() - 0.5) <= 3 * 0.5 / np.sqrt(draws.size)


def test_iid_chain_uses_evolved_states():
    U = haar_random_unitary(3, 4)
    psi = random_state(3, 4)
    dec = Decomposition.singletons(3)
    _, born = iid_chain(U, dec, psi, 5, seed=1)
    state = psi
    for k in range(6):
        np.testing.assert_allclose(born[k], born_distribution(state, dec).weights, atol=1e-12)
        state = evolve_discrete(U, state)


def test_minimal_and_restricted_processes_differ():
    # the step [1.2, 2.0] crosses the flow reversal at pi/2, so the restricted
    # process jumps both ways while the minimal one only moves net probability
    t, tau = 1.2, 0.8
    psi_t = StateVector([np.cos(t), -1j * np.sin(t)])
    U = scipy.linalg.expm(-1j * tau * SIGMA_X.matrix)
    H = principal_log_hamiltonian(U, tau)
    P_tilde, _, _ = restricted_transition_matrix(H, TWO, psi_t, tau, n_max=12)
    P_hat = two_state_transition(psi_t, U, TWO).probs
    assert np.abs(P_tilde - P_hat).max() > 0.05
    assert P_tilde[0, 1] > 0.01 and P_tilde[1, 0] > 0.01 and P_hat[1, 0] * P_hat[0, 1] == 0


def test_minimal_and_restricted_agree_without_reversal():
    t, tau = 0.3, 0.1
    psi_t = StateVector([np.cos(t), -1j * np.sin(t)])
    U = scipy.linalg.expm(-1j * tau * SIGMA_X.matrix)
    P_tilde, _, _ = restricted_transition_matrix(SIGMA_X, TWO, psi_t, tau, n_max=12)
    np.testing.assert_allclose(P_tilde, two_state_transition(psi_t, U, TWO).probs, atol=1e-10)
