"""Ansatz construction, action assembly, stationarity solve, lambda profiles."""

import numpy as np
import pytest

from cdanneal.errors import CapacityError, NumericError
from cdanneal.model import (
    Instance,
    Protocol,
    build_dh0,
    build_h0,
    sample_instance,
)
from cdanneal.agp import (
    ActionSystem,
    action_value,
    agp_profile,
    assemble_action_polynomials,
    assemble_action_system,
    build_ansatz,
    cd_hamiltonian,
    closed_form_single_spin_alpha,
    solve_coefficients,
)
from cdanneal.paulis import PauliSum


def single_spin_instance(gamma=1.0, b=1.0):
    return Instance("chain", 1, 0, np.array([gamma]), np.array([b]), np.zeros(0))


def random_instance(rng, n, topology="chain"):
    inst = sample_instance(int(rng.integers(1 << 32)), n, topology, 1.0, 0.5)
    return inst


# -- ansatz bases ---------------------------------------------------------------


def test_order1_basis():
    ans = build_ansatz(1, sample_instance(0, 3, "chain"))
    assert len(ans) == 3
    assert [s.label() for s in ans.basis] == ["YII", "IYI", "IIY"]
    assert ans.labels == ("alpha_0", "alpha_1", "alpha_2")


def test_order2_chain_size():
    for n in (2, 3, 6):
        ans = build_ansatz(2, sample_instance(0, n, "chain"))
        assert len(ans) == 5 * n - 4


def test_order2_all_to_all_size():
    for n in (2, 3, 5):
        ans = build_ansatz(2, sample_instance(0, n, "all_to_all"))
        assert len(ans) == n + 2 * n * (n - 1)


def test_exact_basis_n2():
    ans = build_ansatz("exact", sample_instance(0, 2, "chain"))
    labels = {s.label() for s in ans.basis}
    assert labels == {"YI", "YX", "YZ", "IY", "XY", "ZY"}
    assert len(ans) == 6


def test_exact_basis_counts():
    for n in (2, 3, 4):
        ans = build_ansatz("exact", sample_instance(0, n, "chain"))
        assert len(ans) == (4**n - 2**n) // 2


def test_all_basis_strings_have_odd_y():
    inst = sample_instance(1, 4, "all_to_all")
    for order in (1, 2, "exact"):
        for s in build_ansatz(order, inst).basis:
            assert s.y_count % 2 == 1
            assert s.is_hermitian


def test_exact_capacity_guard():
    with pytest.raises(CapacityError):
        build_ansatz("exact", sample_instance(0, 15, "chain"))
    with pytest.raises(ValueError):
        build_ansatz(3, sample_instance(0, 3, "chain"))


def test_labels_unique():
    for topology in ("chain", "all_to_all"):
        ans = build_ansatz(2, sample_instance(0, 5, topology))
        assert len(set(ans.labels)) == len(ans.labels)


# -- action assembly -------------------------------------------------------------


def test_single_spin_M_matches_symbolic():
    # H = h_x X + h_z Z with ansatz {Y} gives M = [4 (h_x^2 + h_z^2)]
    inst = single_spin_instance(gamma=1.3, b=-0.4)
    ans = build_ansatz(1, inst)
    for lam in (0.0, 0.25, 0.8, 1.0):
        hx = -(1 - lam) * 1.3
        hz = -lam * -0.4
        system = assemble_action_system(build_h0(inst, lam), build_dh0(inst), ans)
        assert system.M[0, 0] == pytest.approx(4 * (hx**2 + hz**2), rel=1e-12)


def test_M_symmetric_psd_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        topology = "chain" if rng.integers(2) else "all_to_all"
        inst = random_instance(rng, n, topology)
        ans = build_ansatz(int(rng.integers(1, 3)), inst)
        lam = float(rng.uniform())
        system = assemble_action_system(build_h0(inst, lam), build_dh0(inst), ans)
        np.testing.assert_allclose(system.M, system.M.T, atol=1e-12)
        assert np.linalg.eigvalsh(system.M).min() >= -1e-10


def test_zero_hamiltonian_gives_zero_w():
    inst = sample_instance(2, 3, "chain")
    ans = build_ansatz(2, inst)
    system = assemble_action_system(PauliSum.zero(3), build_dh0(inst), ans)
    assert np.all(system.w == 0.0)
    assert np.all(system.M == 0.0)


def test_polynomial_assembly_matches_direct():
    rng = np.random.default_rng(17)
    for topology in ("chain", "all_to_all"):
        for order in (1, 2):
            inst = random_instance(rng, 4, topology)
            ans = build_ansatz(order, inst)
            polys = assemble_action_polynomials(inst, ans)
            dh0 = build_dh0(inst)
            for lam in (0.0, 0.31, 0.77, 1.0):
                direct = assemble_action_system(build_h0(inst, lam), dh0, ans)
                fast = polys.system_at(lam)
                np.testing.assert_allclose(fast.M, direct.M, atol=1e-12)
                np.testing.assert_allclose(fast.w, direct.w, atol=1e-12)
                assert fast.s0 == pytest.approx(direct.s0, rel=1e-12)


# -- solving ----------------------------------------------------------------------


def test_one_by_one_system():
    c, residual, degenerate = solve_coefficients(ActionSystem(np.array([[4.0]]), np.array([-2.0])))
    assert c[0] == pytest.approx(-0.5, abs=1e-11)
    assert residual <= 1e-10
    assert not degenerate


def test_singular_zero_hamiltonian_flagged():
    # zero transverse field: H0(0) = 0 makes every commutant vanish
    inst = Instance("chain", 3, 0, np.zeros(3), np.array([0.4, -1.1, 0.2]), np.full(2, 0.5))
    ans = build_ansatz(1, inst)
    system = assemble_action_system(build_h0(inst, 0.0), build_dh0(inst), ans)
    c, residual, degenerate = solve_coefficients(system, regularization=1e-12)
    assert degenerate
    assert np.all(np.isfinite(c))
    assert residual <= 1e-10


def test_singular_synthetic_system_flagged():
    M = np.array([[1.0, 1.0], [1.0, 1.0]])
    w = np.array([1.0, 1.0])  # inside the column space
    c, residual, degenerate = solve_coefficients(ActionSystem(M, w))
    assert degenerate
    assert np.all(np.isfinite(c))
    assert residual <= 1e-6


def test_residual_small_on_nonsingular_systems():
    rng = np.random.default_rng(29)
    for _ in range(10):
        inst = random_instance(rng, int(rng.integers(2, 5)))
        ans = build_ansatz(2, inst)
        system = assemble_action_system(build_h0(inst, 0.4), build_dh0(inst), ans)
        c, residual, _ = solve_coefficients(system)
        assert residual <= 1e-10 * max(np.linalg.norm(system.w), 1e-30)


def test_nonfinite_rejected():
    with pytest.raises(NumericError):
        solve_coefficients(ActionSystem(np.array([[np.nan]]), np.array([1.0])))


# -- action values ------------------------------------------------------------------


def test_solution_improves_on_zero():
    rng = np.random.default_rng(31)
    for _ in range(10):
        inst = random_instance(rng, int(rng.integers(2, 5)), "all_to_all")
        ans = build_ansatz(1, inst)
        system = assemble_action_system(build_h0(inst, 0.6), build_dh0(inst), ans)
        c, _, _ = solve_coefficients(system)
        s_star = action_value(system, c)
        s_zero = action_value(system, np.zeros(system.dim))
        assert s_zero == pytest.approx(system.s0)
        assert s_star <= s_zero + 1e-12


def test_larger_ansatz_never_worse():
    rng = np.random.default_rng(37)
    for topology in ("chain", "all_to_all"):
        for _ in range(5):
            n = int(rng.integers(2, 7))
            inst = random_instance(rng, n, topology)
            lam = float(rng.uniform(0.1, 0.9))
            h0, dh0 = build_h0(inst, lam), build_dh0(inst)
            values = {}
            for order in (1, 2):
                system = assemble_action_system(h0, dh0, build_ansatz(order, inst))
                c, _, _ = solve_coefficients(system)
                values[order] = action_value(system, c)
            assert values[2] <= values[1] + 1e-12


def test_solution_is_local_minimum():
    rng = np.random.default_rng(41)
    inst = random_instance(rng, 3, "chain")
    ans = build_ansatz(2, inst)
    system = assemble_action_system(build_h0(inst, 0.35), build_dh0(inst), ans)
    c, _, _ = solve_coefficients(system)
    s_star = action_value(system, c)
    for m in range(system.dim):
        for delta in (1e-6, -1e-6):
            perturbed = c.copy()
            perturbed[m] += delta
            assert action_value(system, perturbed) >= s_star - 1e-12 * max(1.0, abs(s_star))


# -- profiles -----------------------------------------------------------------------


def test_single_spin_closed_form_on_grid():
    for gamma, b in ((1.0, 1.0), (1.3, -0.7)):
        inst = single_spin_instance(gamma, b)
        profile = agp_profile(inst, Protocol.cd(1, tau=1.0))
        expected = closed_form_single_spin_alpha(profile.lambda_grid, gamma, b)
        np.testing.assert_allclose(profile.coeffs[:, 0], expected, atol=1e-10)
        assert profile.residual_max <= 1e-8
        assert not profile.degenerate


def test_profile_reflection_symmetry_uniform_chain():
    n = 5
    inst = Instance("chain", n, 0, np.ones(n), np.full(n, 0.4), np.full(n - 1, 0.5))
    profile = agp_profile(inst, Protocol.cd(1, tau=1.0), grid_size=64)
    for row in profile.coeffs[::8]:
        np.testing.assert_allclose(row, row[::-1], atol=1e-10)
    # two-spin families map into each other under reflection: yx(j) <-> xy(n-2-j)
    prof2 = agp_profile(inst, Protocol.cd(2, tau=1.0), grid_size=64)
    idx = {label: i for i, label in enumerate(prof2.labels)}
    for row in prof2.coeffs[::8]:
        for j in range(n - 1):
            jr = n - 2 - j
            assert row[idx[f"c_yx_{j}_{j+1}"]] == pytest.approx(
                row[idx[f"c_xy_{jr}_{jr+1}"]], abs=1e-10
            )
            assert row[idx[f"c_yz_{j}_{j+1}"]] == pytest.approx(
                row[idx[f"c_zy_{jr}_{jr+1}"]], abs=1e-10
            )


def test_exact_ansatz_cancels_offdiagonal_transitions():
    # with the full odd-Y basis the minimized G = dH0 + i[A', H0] carries no
    # matrix elements between distinct instantaneous eigenstates
    rng = np.random.default_rng(43)
    for n in (2, 3):
        inst = random_instance(rng, n, "all_to_all")
        ans = build_ansatz("exact", inst)
        dh0 = build_dh0(inst)
        for lam in (0.3, 0.5, 0.77):
            h0 = build_h0(inst, lam)
            system = assemble_action_system(h0, dh0, ans)
            c, _, _ = solve_coefficients(system)
            a_dense = sum(cm * om.to_dense() for cm, om in zip(c, ans.basis))
            g_dense = build_dh0(inst).to_dense() + 1j * (
                a_dense @ h0.to_dense() - h0.to_dense() @ a_dense
            )
            evals, vecs = np.linalg.eigh(h0.to_dense())
            assert np.diff(evals).min() > 1e-6  # generic disorder: nondegenerate
            g_eig = vecs.conj().T @ g_dense @ vecs
            off = g_eig - np.diag(np.diag(g_eig))
            assert np.max(np.abs(off)) <= 1e-8


def test_profile_grid_and_validation():
    inst = single_spin_instance()
    profile = agp_profile(inst, Protocol.cd(1, tau=1.0), grid_size=128)
    assert profile.lambda_grid[0] == 0.0 and profile.lambda_grid[-1] == 1.0
    assert profile.coeffs.shape == (128, 1)
    with pytest.raises(ValueError):
        agp_profile(inst, Protocol.cd(1, tau=1.0), grid_size=1)
    with pytest.raises(ValueError):
        profile.at(1.5)


def test_cd_hamiltonian_endpoints_and_qa():
    inst = sample_instance(5, 3, "chain", 1.0, 0.5)
    proto = Protocol.cd(1, tau=2.0)
    profile = agp_profile(inst, proto, grid_size=64)
    assert len(cd_hamiltonian(inst, proto, profile, 0.0)) == 0
    assert len(cd_hamiltonian(inst, proto, profile, 2.0)) == 0
    assert len(cd_hamiltonian(inst, proto, profile, 1.0)) > 0
    qa = Protocol.qa(2.0)
    qa_profile = agp_profile(inst, qa, grid_size=64)
    for t in (0.0, 0.7, 2.0):
        assert len(cd_hamiltonian(inst, qa, qa_profile, t)) == 0
    with pytest.raises(ValueError):
        cd_hamiltonian(inst, proto, profile, 2.5)


def test_cd_hamiltonian_single_spin_midpoint():
    tau = 1.0
    inst = single_spin_instance(1.0, 1.0)
    proto = Protocol.cd(1, tau)
    profile = agp_profile(inst, proto)
    term = cd_hamiltonian(inst, proto, profile, tau / 2)
    # lambda(tau/2) = 1/2, alpha(1/2) = -1, lambda_dot = pi^2 / (4 tau)
    assert len(term) == 1
    assert term.coeff(1, 1) == pytest.approx(-np.pi**2 / (4 * tau), abs=1e-8)
    assert term.is_hermitian


def test_profile_csv_round_trip(tmp_path):
    inst = single_spin_instance(1.0, -0.3)
    profile = agp_profile(inst, Protocol.cd(1, tau=1.0), grid_size=16)
    path = tmp_path / "profile.csv"
    profile.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "lambda,alpha_0"
    table = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    np.testing.assert_allclose(table[:, 0], profile.lambda_grid, atol=0)
    np.testing.assert_allclose(table[:, 1], profile.coeffs[:, 0], atol=0)
