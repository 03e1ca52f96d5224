"""State-vector engine: ground states, sweep dynamics, spectral AGP oracle.

States live in the fixed bit-order convention of the string algebra
(site 0 = most significant bit), so amplitudes, Pauli masks, and dense
matrices all index identically.

A Pauli sum acts on a state without ever forming its matrix: grouping
terms by x-mask, psi'[u] = sum_k chat_k * s_k[u] * psi[u ^ x_k] with
static sign vectors s_k[u] = (-1)^parity(z_k & u) and chat_k the
coefficient times (-i)^(y_k).  The sign vectors depend only on the
string content, so one compiled table serves every step of a sweep;
only the per-term coefficients are refreshed.

Time evolution uses the exponential midpoint rule: each step applies
exp(-i dt H(t_mid)) through a scaled Taylor series that is unitary to
series-truncation accuracy (~1e-15 per step), giving a second-order,
norm-preserving integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .agp import AgpCoefficients, agp_profile
from .errors import CapacityError, DegeneracyError, NumericError
from .model import Instance, Protocol, build_driver, build_problem, lambda_dot, lambda_t
from .paulis import DENSE_LIMIT, PauliString, PauliSum

#: full diagonalization is used up to this size; above it, iterative eigensolve
_DENSE_EIG_LIMIT = 12

#: relative gap below which a ground space counts as degenerate
_GROUND_DEGENERACY_TOL = 1e-10

#: per-run norm drift budget for the unitary integrator
NORM_TOL = 1e-9

_I_POWERS = (1.0 + 0.0j, -1.0j, -1.0 + 0.0j, 1.0j)  # (-i)**k for k = 0..3


def plus_state(n: int) -> np.ndarray:
    """Uniform superposition: ground state of -sum_j gamma_j X_j for gamma > 0."""
    if n > DENSE_LIMIT:
        raise CapacityError(f"state vectors limited to {DENSE_LIMIT} spins")
    dim = 1 << n
    return np.full(dim, 2.0 ** (-n / 2.0), dtype=complex)


def fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    """Squared overlap |<psi|phi>|^2."""
    psi = np.asarray(psi)
    phi = np.asarray(phi)
    if psi.shape != phi.shape:
        raise ValueError("state dimension mismatch")
    return float(abs(np.vdot(psi, phi)) ** 2)


class CompiledTerms:
    """Pauli strings grouped by x-mask with static sign tables.

    ``base`` folds the (-i)^y phase of each canonical string; per-call
    coefficient vectors supply the physics weights, so one compilation
    covers a whole time-dependent sweep.
    """

    def __init__(self, n: int, strings: list[PauliString]):
        if n > DENSE_LIMIT:
            raise CapacityError(f"compiled operators limited to {DENSE_LIMIT} spins")
        self.n = n
        self.n_terms = len(strings)
        dim = 1 << n
        idx = np.arange(dim, dtype=np.uint64)
        groups: dict[int, list[int]] = {}
        for k, s in enumerate(strings):
            if s.n != n:
                raise ValueError("spin-count mismatch in compiled terms")
            groups.setdefault(s.x, []).append(k)
        self.perms: list[np.ndarray] = []
        self.signs: list[np.ndarray] = []
        self.term_index: list[np.ndarray] = []
        self.base: np.ndarray = np.empty(len(strings), dtype=complex)
        for k, s in enumerate(strings):
            self.base[k] = _I_POWERS[s.y_count % 4]
        for x, members in groups.items():
            self.perms.append((idx ^ np.uint64(x)).astype(np.intp))
            rows = np.empty((len(members), dim))
            for r, k in enumerate(members):
                z = np.uint64(strings[k].z)
                rows[r] = 1.0 - 2.0 * (np.bitwise_count(idx & z).astype(np.float64) % 2.0)
            self.signs.append(rows)
            self.term_index.append(np.asarray(members, dtype=np.intp))

    def weights(self, coeffs: np.ndarray) -> list[np.ndarray]:
        """Per-group weight vectors for a given per-term coefficient vector."""
        scaled = self.base * np.asarray(coeffs)
        return [scaled[m] @ s for m, s in zip(self.term_index, self.signs)]

    def apply(self, weights: list[np.ndarray], psi: np.ndarray) -> np.ndarray:
        out = weights[0] * psi[self.perms[0]]
        for perm, w in zip(self.perms[1:], weights[1:]):
            out += w * psi[perm]
        return out

    @classmethod
    def from_sum(cls, op: PauliSum) -> tuple["CompiledTerms", np.ndarray]:
        strings, coeffs = [], []
        for s, c in op.strings():
            strings.append(s)
            coeffs.append(c)
        if not strings:
            compiled = cls(op.n, [PauliString.identity(op.n)])
            return compiled, np.zeros(1)
        return cls(op.n, strings), np.asarray(coeffs)


def apply_sum(op: PauliSum, psi: np.ndarray) -> np.ndarray:
    """One-shot matrix-free application of a Pauli sum to a state."""
    compiled, coeffs = CompiledTerms.from_sum(op)
    return compiled.apply(compiled.weights(coeffs), psi)


def expectation_value(op: PauliSum, psi: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, apply_sum(op, psi))))


def _expm_apply(
    compiled: CompiledTerms,
    weights: list[np.ndarray],
    psi: np.ndarray,
    dt: float,
    hnorm: float,
    tol: float = 1e-15,
    max_terms: int = 80,
) -> np.ndarray:
    """exp(-i dt H) psi by scaled Taylor summation.

    Substeps keep ||dt_sub * H|| <= 1 so the series converges in a few
    dozen terms; the truncated series is unitary to the same accuracy.
    """
    nsub = max(1, int(np.ceil(abs(dt) * hnorm)))
    dt_sub = dt / nsub
    for _ in range(nsub):
        out = psi.copy()
        term = psi
        scale = float(np.linalg.norm(psi))
        for k in range(1, max_terms + 1):
            term = (-1j * dt_sub / k) * compiled.apply(weights, term)
            out += term
            if float(np.linalg.norm(term)) <= tol * scale:
                break
        else:
            raise NumericError("matrix-exponential series failed to converge")
        psi = out
    return psi


# -- ground states -------------------------------------------------------------


@dataclass(frozen=True)
class GroundState:
    """Minimal eigenpair with degeneracy bookkeeping.

    ``vector`` is the canonical representative (lowest index of the
    maximal-magnitude amplitude carries a positive real phase);
    ``subspace`` holds an orthonormal basis of the full ground space,
    one column per state (a single column when nondegenerate).
    """

    energy: float
    vector: np.ndarray
    degenerate: bool
    subspace: np.ndarray

    def overlap_fidelity(self, psi: np.ndarray) -> float:
        """Total weight of psi inside the ground space."""
        amps = self.subspace.conj().T @ np.asarray(psi)
        return float(np.real(amps.conj() @ amps))


def _canonicalize(vec: np.ndarray) -> np.ndarray:
    # first maximal-magnitude amplitude fixes the global phase
    pivot = int(np.argmax(np.abs(vec)))
    phase = vec[pivot] / abs(vec[pivot])
    return vec / phase


def ground_state(H: PauliSum) -> GroundState:
    """Lowest eigenpair of a Hermitian Pauli sum.

    Diagonal sums (classical Hamiltonians) bypass diagonalization; small
    systems use a full dense eigensolve; the largest sizes fall back to
    an iterative matrix-free solver.
    """
    n = H.n
    if n > DENSE_LIMIT:
        raise CapacityError(f"ground states limited to {DENSE_LIMIT} spins")
    dim = 1 << n
    if all(x == 0 for (x, _z), _c in H.items()) or len(H) == 0:
        idx = np.arange(dim, dtype=np.uint64)
        energies = np.zeros(dim)
        for (_x, z), c in H.items():
            energies += c.real * (1.0 - 2.0 * (np.bitwise_count(idx & np.uint64(z)) % 2.0))
        order = np.argsort(energies, kind="stable")
        e0 = float(energies[order[0]])
        tol = _GROUND_DEGENERACY_TOL * max(1.0, abs(e0))
        members = np.sort(order[energies[order] <= e0 + tol])
        subspace = np.zeros((dim, members.size), dtype=complex)
        subspace[members, np.arange(members.size)] = 1.0
        vector = subspace[:, 0].copy()
        return GroundState(e0, vector, members.size > 1, subspace)
    if n <= _DENSE_EIG_LIMIT:
        evals, evecs = np.linalg.eigh(H.to_dense())
    else:
        compiled, coeffs = CompiledTerms.from_sum(H)
        weights = compiled.weights(coeffs)
        op = LinearOperator(
            (dim, dim), matvec=lambda v: compiled.apply(weights, v), dtype=complex
        )
        k = min(6, dim - 1)
        evals, evecs = eigsh(op, k=k, which="SA")
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
    e0 = float(evals[0])
    tol = _GROUND_DEGENERACY_TOL * max(1.0, abs(e0))
    count = int(np.sum(evals <= e0 + tol))
    subspace = evecs[:, :count].astype(complex)
    # orthonormalize against rounding in the degenerate block
    if count > 1:
        subspace, _ = np.linalg.qr(subspace)
    vector = _canonicalize(subspace[:, 0].copy())
    subspace = subspace.copy()
    subspace[:, 0] = vector
    return GroundState(e0, vector, count > 1, subspace)


# -- sweep dynamics --------------------------------------------------------------


@dataclass(frozen=True)
class EvolveInfo:
    steps: int
    max_norm_drift: float


def default_steps(tau: float) -> int:
    """Fixed-step budget: 2000 steps up to tau = 10, scaling linearly beyond."""
    return max(2000, int(np.ceil(200.0 * tau)))


def evolve(
    instance: Instance,
    protocol: Protocol,
    steps: int | None = None,
    profile: AgpCoefficients | None = None,
    return_info: bool = False,
):
    """Propagate the sweep from the transverse ground state to t = tau.

    The CD coefficient profile is computed on demand; pass one in to
    amortize it across sweep durations (the profile depends only on the
    instance and ansatz, not on tau).
    """
    n = instance.n
    if n > DENSE_LIMIT:
        raise CapacityError(f"exact evolution limited to {DENSE_LIMIT} spins")
    if np.any(instance.gamma <= 0):
        raise ValueError("evolve requires positive transverse strengths gamma_j")
    tau = protocol.schedule.tau
    if steps is None:
        steps = default_steps(tau)
    if steps < 1:
        raise ValueError("steps must be positive")
    if protocol.kind == "CD" and profile is None:
        profile = agp_profile(instance, protocol)

    driver = build_driver(instance)
    problem = build_problem(instance)
    d_strings = [s for s, _ in driver.strings()]
    d_coeffs = np.array([c.real for _, c in driver.strings()])
    p_strings = [s for s, _ in problem.strings()]
    p_coeffs = np.array([c.real for _, c in problem.strings()])
    cd_basis: tuple[PauliString, ...] = ()
    if protocol.kind == "CD":
        cd_basis = profile.ansatz.basis
    compiled = CompiledTerms(n, [*d_strings, *p_strings, *cd_basis])

    dt = tau / steps
    t_mid = (np.arange(steps) + 0.5) * dt
    lam_mid = np.atleast_1d(lambda_t(t_mid, tau))
    rate_mid = np.atleast_1d(lambda_dot(t_mid, tau))
    if cd_basis:
        cd_rows = profile.at_array(lam_mid)
    psi = plus_state(n)
    max_drift = 0.0
    for k in range(steps):
        lam = lam_mid[k]
        parts = [(1.0 - lam) * d_coeffs, lam * p_coeffs]
        if cd_basis:
            parts.append(rate_mid[k] * cd_rows[k])
        coeffs = np.concatenate(parts)
        weights = compiled.weights(coeffs)
        hnorm = float(np.sum(np.abs(coeffs)))
        psi = _expm_apply(compiled, weights, psi, dt, hnorm)
        drift = abs(float(np.linalg.norm(psi)) - 1.0)
        max_drift = max(max_drift, drift)
        if drift > NORM_TOL:
            raise NumericError(
                f"norm drift {drift:.3e} at step {k + 1}/{steps} exceeds {NORM_TOL}"
            )
    if return_info:
        return psi, EvolveInfo(steps, max_drift)
    return psi


# -- spectral AGP oracle -----------------------------------------------------------


def exact_agp_spectral(H: PauliSum, dH: PauliSum) -> np.ndarray:
    """Dense exact gauge potential: A_mn = i dH_mn / (E_n - E_m), zero diagonal.

    Built in the eigenbasis of H and rotated back; the diagonal gauge
    freedom is fixed to zero.  Raises on spectra with gaps below 1e-10.
    """
    if H.n > DENSE_LIMIT:
        raise CapacityError(f"spectral AGP limited to {DENSE_LIMIT} spins")
    if H.n != dH.n:
        raise ValueError("spin-count mismatch")
    evals, vecs = np.linalg.eigh(H.to_dense())
    gaps = np.diff(evals)
    if gaps.size and float(gaps.min()) < 1e-10:
        raise DegeneracyError(f"spectral gap {gaps.min():.3e} below tolerance 1e-10")
    dh_eig = vecs.conj().T @ dH.to_dense() @ vecs
    denom = evals[None, :] - evals[:, None]
    np.fill_diagonal(denom, 1.0)
    a_eig = 1j * dh_eig / denom
    np.fill_diagonal(a_eig, 0.0)
    return vecs @ a_eig @ vecs.conj().T
