"""TEBD engine tests: canonical form, gates, evolution oracles, imaginary time."""

import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import solve_ivp

from cdanneal import exact, mps
from cdanneal.agp import agp_profile, cd_hamiltonian
from cdanneal.errors import CapacityError
from cdanneal.model import (
    Instance,
    Protocol,
    build_h0,
    build_problem,
    classical_ground_configs,
    lambda_t,
    sample_instance,
)


def random_mps(rng, n, chi, center=0):
    dims = [1] + [min(chi, 2 ** min(j + 1, n - 1 - j)) for j in range(n - 1)] + [1]
    tensors = [
        rng.normal(size=(dims[j], 2, dims[j + 1]))
        + 1j * rng.normal(size=(dims[j], 2, dims[j + 1]))
        for j in range(n)
    ]
    state = mps.MpsState(tensors, 0)
    state.canonicalize(center)
    state.normalize()
    return state


@pytest.fixture(scope="module")
def chain8():
    return sample_instance(5, 8, "chain", coupling_value=0.5)


@pytest.fixture(scope="module")
def chain8_profiles(chain8):
    return {
        label: agp_profile(chain8, Protocol.from_label(label, 10.0))
        for label in ("CD1", "CD2")
    }


# -- state basics -------------------------------------------------------------


def test_plus_state_trivials():
    state = mps.init_plus_state(3)
    assert state.bond_dims() == [1, 1]
    assert abs(mps.overlap(state, state) - 1.0) < 1e-14
    np.testing.assert_allclose(state.to_dense(), np.full(8, 2.0 ** -1.5), atol=1e-15)


def test_canonicalize_isometries_and_dense_invariance():
    rng = np.random.default_rng(3)
    state = random_mps(rng, 5, 4)
    dense = state.to_dense()
    for center in (0, 2, 4):
        state.move_center(center)
        assert max(state.isometry_errors()) < 1e-10
        np.testing.assert_allclose(state.to_dense(), dense, atol=1e-12)


def test_overlap_product_states_factorize():
    rng = np.random.default_rng(11)
    va = [rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(8)]
    vb = [rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(8)]
    got = mps.overlap(mps.product_state(va), mps.product_state(vb))
    expected = np.prod([np.vdot(a, b) for a, b in zip(va, vb)])
    assert abs(got - expected) < 1e-12 * abs(expected)


def test_overlap_matches_dense_inner_product():
    rng = np.random.default_rng(4)
    a = random_mps(rng, 8, 6)
    b = random_mps(rng, 8, 6)
    assert abs(mps.overlap(a, b) - np.vdot(a.to_dense(), b.to_dense())) < 1e-12
    with pytest.raises(ValueError):
        mps.overlap(a, mps.init_plus_state(5))


def test_amplitude_and_z_expectations_vs_dense():
    rng = np.random.default_rng(9)
    state = random_mps(rng, 6, 5, center=3)
    psi = state.to_dense()
    for idx in (0, 17, 63):
        assert abs(state.amplitude(idx) - psi[idx]) < 1e-12
    z, zz = mps.local_z_expectations(state)
    signs = np.array([[1.0 - 2.0 * ((i >> (5 - j)) & 1) for i in range(64)] for j in range(6)])
    dens = np.abs(psi) ** 2
    np.testing.assert_allclose(z, signs @ dens, atol=1e-12)
    np.testing.assert_allclose(zz, (signs[:-1] * signs[1:]) @ dens, atol=1e-12)


# -- two-site gates -----------------------------------------------------------


def test_identity_gate_leaves_state_unchanged():
    rng = np.random.default_rng(21)
    state = random_mps(rng, 4, 4, center=1)
    dense = state.to_dense()
    mps.apply_two_site_gate(state, 1, np.eye(4, dtype=complex), chi_max=16, trunc_tol=0.0)
    np.testing.assert_allclose(state.to_dense(), dense, atol=1e-12)


def test_entangling_gate_raises_bond_to_two():
    state = mps.init_plus_state(2)
    gate = scipy.linalg.expm(-0.25j * np.pi * np.kron([[1, 0], [0, -1]], [[1, 0], [0, -1]]))
    mps.apply_two_site_gate(state, 0, gate, chi_max=4, trunc_tol=1e-12)
    assert state.bond_dims() == [2]
    np.testing.assert_allclose(state.to_dense(), gate @ np.full(4, 0.5), atol=1e-13)
    assert state.max_chi_seen == 2


def test_truncating_bell_pair_to_chi_one_gives_half_fidelity():
    left, right = np.zeros((1, 2, 2), dtype=complex), np.zeros((2, 2, 1), dtype=complex)
    left[0, 0, 0] = left[0, 1, 1] = 1.0
    right[0, 0, 0] = right[1, 1, 0] = 2.0 ** -0.5
    state = mps.MpsState([left, right], center=1)
    original = state.to_dense()
    mps.apply_two_site_gate(state, 0, np.eye(4, dtype=complex), chi_max=1, trunc_tol=0.0)
    assert state.bond_dims() == [1]
    fidelity = abs(np.vdot(state.to_dense(), original)) ** 2
    assert abs(fidelity - 0.5) < 1e-12
    assert abs(state.discarded_weight - 0.5) < 1e-12


def test_random_unitary_gate_roundtrip():
    rng = np.random.default_rng(33)
    for _ in range(10):
        state = random_mps(rng, 4, 4, center=2)
        dense = state.to_dense()
        herm = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        herm = herm + herm.conj().T
        gate = scipy.linalg.expm(-0.3j * herm)
        bond = int(rng.integers(0, 3))
        mps.apply_two_site_gate(state, bond, gate, chi_max=16, trunc_tol=0.0)
        mps.apply_two_site_gate(state, bond, gate.conj().T, chi_max=16, trunc_tol=0.0)
        np.testing.assert_allclose(state.to_dense(), dense, atol=1e-10)


# -- trotter steps ------------------------------------------------------------


def test_single_step_error_is_third_order():
    inst = sample_instance(2, 4, "chain", coupling_value=0.5)
    proto = Protocol.cd(1, 2.0)
    prof = agp_profile(inst, proto)
    rng = np.random.default_rng(6)
    vecs = [v / np.linalg.norm(v) for v in rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))]
    t0 = 0.7

    def one_step_error(dt):
        state = mps.product_state(vecs)
        plan = mps.TebdPlan(delta_t=dt, chi_max=64, trunc_tol=0.0)
        mps.trotter_step(state, inst, proto, prof, t0, plan)

        def rhs(t, y):
            h = (build_h0(inst, lambda_t(t, 2.0)) + cd_hamiltonian(inst, proto, prof, t)).to_dense()
            return -1j * (h @ y)

        sol = solve_ivp(
            rhs, (t0, t0 + dt), mps.product_state(vecs).to_dense(),
            rtol=1e-12, atol=1e-12, method="DOP853",
        )
        return np.linalg.norm(state.to_dense() - sol.y[:, -1])

    ratio = one_step_error(0.2) / one_step_error(0.1)
    assert 8.0 * 0.8 < ratio < 8.0 * 1.2


def test_qa_generators_have_no_y_component(chain8):
    h1, h2 = mps._layer_hams(chain8, 0.37, 0.11, None, None)
    assert np.max(np.abs(np.einsum("jab,ba->j", h1, mps._SY))) == 0.0
    for block in (mps._YX, mps._XY, mps._YZ, mps._ZY, np.kron(mps._SY, np.eye(2)), np.kron(np.eye(2), mps._SY)):
        assert np.max(np.abs(np.einsum("jab,ba->j", h2, block))) == 0.0


def test_norm_preserved_across_real_steps(chain8):
    proto = Protocol.qa(1.0)
    plan = mps.TebdPlan(delta_t=0.05)
    state = mps.init_plus_state(chain8.n)
    for k in range(20):
        mps.trotter_step(state, chain8, proto, None, k * plan.delta_t, plan)
        assert abs(state.norm() - 1.0) < 1e-10


# -- full evolutions ----------------------------------------------------------


def test_evolution_matches_exact_engine_all_protocols(chain8, chain8_profiles):
    # converged settings for both engines; the agreement bound is 1e-6
    for label in ("QA", "CD1", "CD2"):
        proto = Protocol.from_label(label, 10.0)
        prof = chain8_profiles.get(label)
        psi = exact.evolve(chain8, proto, steps=8000, profile=prof)
        f_exact = exact.ground_state(build_problem(chain8)).overlap_fidelity(psi)
        state = mps.evolve_tebd(
            chain8, proto, mps.TebdPlan(delta_t=0.01, chi_max=100, trunc_tol=0.0),
            profile=prof,
        )
        f_mps = mps.problem_ground_fidelity(state, chain8)
        assert abs(f_mps - f_exact) < 1e-6, label
        assert abs(np.vdot(state.to_dense(), psi)) ** 2 > 1.0 - 1e-8


def test_halving_dt_changes_fidelity_within_tolerance(chain8, chain8_profiles):
    proto = Protocol.cd(2, 10.0)
    prof = chain8_profiles["CD2"]
    fids = []
    for dt in (0.0125, 0.00625):
        state = mps.evolve_tebd(
            chain8, proto, mps.TebdPlan(delta_t=dt, chi_max=100, trunc_tol=0.0), profile=prof
        )
        fids.append(mps.problem_ground_fidelity(state, chain8))
    assert abs(fids[0] - fids[1]) <= 1e-6


def test_bond_cap_increase_does_not_move_fidelity():
    inst = sample_instance(17, 16, "chain", coupling_value=0.5)
    proto = Protocol.qa(10.0)
    fids = []
    for chi in (100, 150):
        state = mps.evolve_tebd(inst, proto, mps.TebdPlan(delta_t=0.05, chi_max=chi))
        fids.append(mps.problem_ground_fidelity(state, inst))
    assert abs(fids[0] - fids[1]) <= 1e-8


def test_untruncated_evolution_reproduces_exact_fidelity():
    inst = sample_instance(23, 6, "chain", coupling_value=0.5)
    proto = Protocol.cd(1, 1.0)
    prof = agp_profile(inst, proto)
    psi = exact.evolve(inst, proto, steps=32000, profile=prof)
    f_exact = exact.ground_state(build_problem(inst)).overlap_fidelity(psi)
    state = mps.evolve_tebd(
        inst, proto, mps.TebdPlan(delta_t=0.0005, chi_max=4096, trunc_tol=0.0), profile=prof
    )
    assert abs(mps.problem_ground_fidelity(state, inst) - f_exact) < 1e-8


def test_large_chain_discarded_weight_stays_small():
    inst = sample_instance(29, 50, "chain", coupling_value=0.5)
    proto = Protocol.cd(2, 10.0)
    state = mps.evolve_tebd(inst, proto, mps.TebdPlan(delta_t=0.05, chi_max=100))
    assert state.discarded_weight < 1e-8
    assert state.max_chi_seen <= 100
    assert abs(state.norm() - 1.0) < 1e-8


def test_evolution_input_validation(chain8):
    with pytest.raises(ValueError):
        mps.evolve_tebd(sample_instance(0, 4, "all_to_all"), Protocol.qa(1.0))
    with pytest.raises(ValueError):
        mps.evolve_tebd(chain8, Protocol.cd("exact", 1.0))
    with pytest.raises(ValueError):
        mps.evolve_tebd(chain8, Protocol.qa(1.0), mps.TebdPlan(delta_t=0.3))
    with pytest.raises(ValueError):
        mps.TebdPlan(delta_t=0.0)
    with pytest.raises(ValueError):
        mps.TebdPlan(chi_max=0)
    with pytest.raises(CapacityError):
        mps.init_plus_state(20).to_dense()


# -- imaginary time -----------------------------------------------------------


def test_imaginary_ground_state_matches_dense_oracle(chain8):
    energy, state = mps.imaginary_tebd_ground_state(chain8)
    gs = exact.ground_state(build_problem(chain8))
    assert abs(energy - gs.energy) < 1e-8
    assert gs.overlap_fidelity(state.to_dense()) > 1.0 - 1e-8
    # variational: an MPS expectation value can never undercut the true minimum
    assert energy >= gs.energy - 1e-10


def test_imaginary_energy_never_increases(chain8):
    log: list[float] = []
    mps.imaginary_tebd_ground_state(chain8, energy_log=log)
    log = np.asarray(log)
    assert np.all(np.diff(log) <= 1e-10)


def test_imaginary_uniform_instance_polarizes():
    inst = Instance("chain", 8, 0, np.ones(8), np.ones(8), np.full(7, 0.5))
    _, state = mps.imaginary_tebd_ground_state(inst)
    assert abs(state.amplitude(0)) ** 2 >= 1.0 - 1e-9


def test_problem_ground_fidelity_handles_degeneracy():
    # zero fields leave a two-fold degenerate ferromagnetic ground space
    inst = Instance("chain", 4, 0, np.ones(4), np.zeros(4), np.ones(3))
    energy, configs = classical_ground_configs(inst)
    assert configs == [0, 15] and abs(energy + 3.0) < 1e-14
    state = mps.init_plus_state(4)
    gs = exact.ground_state(build_problem(inst))
    assert abs(
        mps.problem_ground_fidelity(state, inst) - gs.overlap_fidelity(state.to_dense())
    ) < 1e-12


# -- checkpoints --------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(41)
    state = random_mps(rng, 6, 4, center=2)
    path = tmp_path / "state.mps"
    mps.save_mps(state, path)
    loaded = mps.load_mps(path)
    assert loaded.n == state.n and loaded.center == state.center
    assert loaded.bond_dims() == state.bond_dims()
    for a, b in zip(loaded.tensors, state.tensors):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        (tmp_path / "junk.mps").write_bytes(b"not a checkpoint")
        mps.load_mps(tmp_path / "junk.mps")
