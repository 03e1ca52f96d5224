"""Matrix-product-state engine for the chain: TEBD sweeps and ground states.

Tensors carry legs (vL, p, vR): left bond, physical spin, right bond.
Site and bond indices are 0-based; bond j couples sites (j, j+1).  The
state is kept in mixed-canonical form around an orthogonality center:
tensors left of the center are left-isometries, tensors right of it are
right-isometries, so the norm is the Frobenius norm of the center tensor
and truncated bond SVDs are locally optimal.

Real-time steps use the second-order symmetric splitting

    U(dt) = S(dt/2) E(dt/2) O(dt) E(dt/2) S(dt/2)

with S the single-site layer (transverse driver, longitudinal field,
single-site CD terms), E the even bonds (0, 2, ...) swept left to right,
and O the odd bonds swept right to left; all coefficients are frozen at
the step midpoint.  Single-site gates are unitary and applied in place;
each two-site gate contracts, SVD-splits, truncates to chi_max and to a
relative tail weight trunc_tol, renormalizes, and logs the discarded
weight on the state.

Imaginary-time evolution of the diagonal problem Hamiltonian uses the
same gate machinery with exp(-H dt) factors (all terms commute, so the
splitting is exact), renormalizing every step and annealing dt downward
until the energy settles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .agp import AgpCoefficients, agp_profile
from .errors import CapacityError, ConvergenceError, NumericError
from .model import Instance, Protocol, classical_ground_configs, lambda_dot, lambda_t
from .paulis import DENSE_LIMIT

_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)

_ZZ = np.kron(_SZ, _SZ)
_YX = np.kron(_SY, _SX)
_XY = np.kron(_SX, _SY)
_YZ = np.kron(_SY, _SZ)
_ZY = np.kron(_SZ, _SY)

#: norm drift allowed across a renormalized sweep
_NORM_TOL = 1e-8


@dataclass(frozen=True)
class TebdPlan:
    """Step size, bond cap, and truncation tolerance for one TEBD run."""

    delta_t: float = 0.05
    chi_max: int = 100
    trunc_tol: float = 1e-12

    def __post_init__(self) -> None:
        if not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        if self.chi_max < 1:
            raise ValueError("chi_max must be at least 1")
        if self.trunc_tol < 0:
            raise ValueError("trunc_tol must be nonnegative")


class MpsState:
    """Mixed-canonical MPS with truncation bookkeeping."""

    def __init__(self, tensors: list[np.ndarray], center: int = 0):
        if not tensors:
            raise ValueError("empty tensor list")
        self.n = len(tensors)
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for j, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"tensor {j} must have shape (left, 2, right)")
        for j in range(self.n - 1):
            if self.tensors[j].shape[2] != self.tensors[j + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {j} and {j + 1}")
        if not 0 <= center < self.n:
            raise ValueError("center out of range")
        self.center = center
        self.max_chi_seen = max(self.bond_dims(), default=1)
        self.discarded_weight = 0.0

    # -- structure ---------------------------------------------------------

    def bond_dims(self) -> list[int]:
        """Internal bond dimensions (length n-1)."""
        return [self.tensors[j].shape[2] for j in range(self.n - 1)]

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensors[self.center]))

    def normalize(self) -> "MpsState":
        nrm = self.norm()
        if nrm == 0.0:
            raise NumericError("cannot normalize a zero state")
        self.tensors[self.center] = self.tensors[self.center] / nrm
        return self

    def copy(self) -> "MpsState":
        out = MpsState([t.copy() for t in self.tensors], self.center)
        out.max_chi_seen = self.max_chi_seen
        out.discarded_weight = self.discarded_weight
        return out

    # -- canonical form ----------------------------------------------------

    def move_center(self, target: int) -> "MpsState":
        """Shift the orthogonality center by successive QR factorizations."""
        if not 0 <= target < self.n:
            raise ValueError("center target out of range")
        while self.center < target:
            c = self.center
            t = self.tensors[c]
            l, p, r = t.shape
            q, rmat = np.linalg.qr(t.reshape(l * p, r))
            self.tensors[c] = q.reshape(l, p, q.shape[1])
            self.tensors[c + 1] = np.tensordot(rmat, self.tensors[c + 1], axes=(1, 0))
            self.center = c + 1
        while self.center > target:
            c = self.center
            t = self.tensors[c]
            l, p, r = t.shape
            # RQ split: transpose so QR acts from the right bond side
            q, rmat = np.linalg.qr(t.reshape(l, p * r).conj().T)
            k = q.shape[1]
            self.tensors[c] = q.conj().T.reshape(k, p, r)
            self.tensors[c - 1] = np.tensordot(self.tensors[c - 1], rmat.conj().T, axes=(2, 0))
            self.center = c - 1
        return self

    def canonicalize(self, center: int = 0) -> "MpsState":
        """Restore mixed-canonical form from scratch (both-ends QR sweep)."""
        self.center = 0
        self.move_center(self.n - 1)
        self.move_center(center)
        return self

    def isometry_errors(self) -> list[float]:
        """Per-tensor deviation from the isometry condition (center exempt)."""
        errs = []
        for j, t in enumerate(self.tensors):
            l, p, r = t.shape
            if j < self.center:
                mat = t.reshape(l * p, r)
                errs.append(float(np.linalg.norm(mat.conj().T @ mat - np.eye(r))))
            elif j > self.center:
                mat = t.reshape(l, p * r)
                errs.append(float(np.linalg.norm(mat @ mat.conj().T - np.eye(l))))
            else:
                errs.append(0.0)
        return errs

    # -- dense access --------------------------------------------------------

    def to_dense(self) -> np.ndarray:
        """Full state vector, site 0 as the most significant bit."""
        if self.n > DENSE_LIMIT:
            raise CapacityError(f"dense conversion limited to {DENSE_LIMIT} spins")
        vec = self.tensors[0]
        for t in self.tensors[1:]:
            vec = np.tensordot(vec, t, axes=(vec.ndim - 1, 0))
        return vec.reshape(-1)

    def amplitude(self, basis_index: int) -> complex:
        """Single computational-basis amplitude by O(n chi^2) contraction."""
        row = np.ones((1, 1), dtype=complex)
        for j in range(self.n):
            bit = (basis_index >> (self.n - 1 - j)) & 1
            row = row @ self.tensors[j][:, bit, :]
        return complex(row[0, 0])


def init_plus_state(n: int) -> MpsState:
    """Product |+>^n: ground state of the bare driver for positive gamma."""
    if n < 1:
        raise ValueError("n must be positive")
    plus = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    return MpsState([plus.reshape(1, 2, 1).copy() for _ in range(n)])


def product_state(vectors: list[np.ndarray]) -> MpsState:
    """Product MPS from per-site 2-vectors (normalized by the caller)."""
    return MpsState([np.asarray(v, dtype=complex).reshape(1, 2, 1) for v in vectors])


def overlap(a: MpsState, b: MpsState) -> complex:
    """Exact contraction of <a|b> left to right."""
    if a.n != b.n:
        raise ValueError("spin-count mismatch")
    env = np.ones((1, 1), dtype=complex)  # legs (vL_a*, vL_b)
    for j in range(a.n):
        tmp = np.tensordot(env, b.tensors[j], axes=(1, 0))  # (vL_a*, p, vR_b)
        env = np.tensordot(a.tensors[j].conj(), tmp, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


# -- gates ---------------------------------------------------------------------


def _svd_robust(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - double LAPACK failure
            raise NumericError("SVD failed to converge") from exc


def apply_single_site_gate(state: MpsState, site: int, gate: np.ndarray) -> MpsState:
    """Apply a 2x2 gate in place.

    Unitary gates preserve canonical form at any site; non-unitary gates
    are only safe at the orthogonality center.
    """
    state.tensors[site] = np.einsum("ab,lbr->lar", gate, state.tensors[site])
    return state


def apply_two_site_gate(
    state: MpsState,
    bond: int,
    gate: np.ndarray,
    chi_max: int,
    trunc_tol: float,
    renormalize: bool = True,
    center_after: str = "right",
) -> MpsState:
    """Contract a 4x4 gate into bond (bond, bond+1), SVD-split, truncate.

    Moves the orthogonality center to the bond first.  Keeps at most
    chi_max singular values and drops the largest tail whose relative
    squared weight stays at or below trunc_tol; the kept spectrum is
    renormalized so truncation never silently shrinks reported
    fidelities.  The relative discarded weight accumulates on the state.
    """
    if not 0 <= bond < state.n - 1:
        raise ValueError(f"bond {bond} out of range")
    if gate.shape != (4, 4):
        raise ValueError("two-site gate must be 4x4")
    state.move_center(bond)
    left, right = state.tensors[bond], state.tensors[bond + 1]
    l = left.shape[0]
    r = right.shape[2]
    theta = np.tensordot(left, right, axes=(2, 0))  # (vL, p1, p2, vR)
    theta = np.tensordot(gate.reshape(2, 2, 2, 2), theta, axes=([2, 3], [1, 2]))
    theta = theta.transpose(2, 0, 1, 3).reshape(l * 2, 2 * r)  # (vL p1, p2 vR)
    u, s, vh = _svd_robust(theta)
    total = float(s @ s)
    if total <= 0.0:
        raise NumericError("two-site gate produced a zero state")
    # smallest keep-count whose discarded tail stays within tolerance
    tail = np.cumsum(s[::-1] ** 2)[::-1] / total  # tail[k] = relative weight of s[k:]
    keep = int(np.searchsorted(-tail, -trunc_tol * (1.0 + 1e-15)))
    keep = max(1, min(chi_max, keep if keep > 0 else 1, s.size))
    discarded = float(tail[keep]) if keep < s.size else 0.0
    s = s[:keep]
    u = u[:, :keep]
    vh = vh[:keep]
    state.discarded_weight += discarded
    state.max_chi_seen = max(state.max_chi_seen, keep)
    if renormalize:
        s = s / np.linalg.norm(s)
    if center_after == "right":
        state.tensors[bond] = u.reshape(l, 2, keep)
        state.tensors[bond + 1] = (s[:, None] * vh).reshape(keep, 2, r)
        state.center = bond + 1
    elif center_after == "left":
        state.tensors[bond] = (u * s[None, :]).reshape(l, 2, keep)
        state.tensors[bond + 1] = vh.reshape(keep, 2, r)
        state.center = bond
    else:
        raise ValueError("center_after must be 'left' or 'right'")
    return state


def _expm_herm_batch(h: np.ndarray, factor: complex) -> np.ndarray:
    """exp(factor * h) for a stack of small Hermitian matrices."""
    evals, vecs = np.linalg.eigh(h)
    phases = np.exp(factor * evals)
    return np.einsum("...ab,...b,...cb->...ac", vecs, phases, vecs.conj())


def _cd_blocks(row: np.ndarray, n: int, order) -> tuple[np.ndarray, ...]:
    """Split a profile row into (alpha, yx, xy, yz, zy) blocks for the chain."""
    nb = n - 1
    if order == 1:
        return row[:n], np.zeros(nb), np.zeros(nb), np.zeros(nb), np.zeros(nb)
    if order == 2:
        blocks = [row[:n]]
        for f in range(4):
            blocks.append(row[n + f * nb : n + (f + 1) * nb])
        return tuple(blocks)
    raise ValueError("chain TEBD supports CD ansatz orders 1 and 2 only")


def _layer_hams(
    instance: Instance, lam: float, rate: float, cd_row: np.ndarray | None, order
) -> tuple[np.ndarray, np.ndarray]:
    """Single-site and bond Hamiltonian stacks frozen at one sweep value."""
    n = instance.n
    if cd_row is None:
        alpha = yx = xy = yz = zy = np.zeros(max(n, 1))
    else:
        alpha, yx, xy, yz, zy = _cd_blocks(cd_row, n, order)
    h1 = (
        -(1.0 - lam) * instance.gamma[:, None, None] * _SX
        - lam * instance.b[:, None, None] * _SZ
        + rate * alpha[:n, None, None] * _SY
    )
    if n == 1:
        return h1, np.zeros((0, 4, 4), dtype=complex)
    h2 = (
        -lam * instance.J[:, None, None] * _ZZ
        + rate
        * (
            yx[: n - 1, None, None] * _YX
            + xy[: n - 1, None, None] * _XY
            + yz[: n - 1, None, None] * _YZ
            + zy[: n - 1, None, None] * _ZY
        )
    )
    return h1, h2


def trotter_step(
    state: MpsState,
    instance: Instance,
    protocol: Protocol,
    coefficients: AgpCoefficients | None,
    t: float,
    plan: TebdPlan,
) -> MpsState:
    """One real-time step from t to t + delta_t (midpoint-frozen Hamiltonian)."""
    dt = plan.delta_t
    tau = protocol.schedule.tau
    t_mid = min(t + 0.5 * dt, tau)
    lam = lambda_t(t_mid, tau)
    rate = lambda_dot(t_mid, tau)
    cd_row = None
    order = None
    if protocol.kind == "CD":
        if coefficients is None:
            raise ValueError("CD protocols need a coefficient profile")
        cd_row = coefficients.at(lam)
        order = protocol.order
    h1, h2 = _layer_hams(instance, lam, rate, cd_row, order)
    u_single = _expm_herm_batch(h1, -0.5j * dt)
    if h2.shape[0]:
        u_even = _expm_herm_batch(h2[0::2], -0.5j * dt)
        u_odd = _expm_herm_batch(h2[1::2], -1.0j * dt)
    even_bonds = list(range(0, state.n - 1, 2))
    odd_bonds = list(range(1, state.n - 1, 2))

    def single_layer():
        for j in range(state.n):
            apply_single_site_gate(state, j, u_single[j])

    def even_layer():
        for i, bond in enumerate(even_bonds):
            apply_two_site_gate(
                state, bond, u_even[i], plan.chi_max, plan.trunc_tol, center_after="right"
            )

    single_layer()
    if h2.shape[0]:
        even_layer()
        for i, bond in reversed(list(enumerate(odd_bonds))):
            apply_two_site_gate(
                state, bond, u_odd[i], plan.chi_max, plan.trunc_tol, center_after="left"
            )
        even_layer()
    single_layer()
    return state


def evolve_tebd(
    instance: Instance,
    protocol: Protocol,
    plan: TebdPlan | None = None,
    profile: AgpCoefficients | None = None,
) -> MpsState:
    """Full sweep 0 -> tau from |+>^n; stats accumulate on the returned state."""
    if instance.topology != "chain":
        raise ValueError("TEBD evolution requires the chain topology")
    if protocol.kind == "CD" and protocol.order == "exact":
        raise ValueError("chain TEBD supports CD ansatz orders 1 and 2 only")
    plan = plan or TebdPlan()
    tau = protocol.schedule.tau
    steps = int(round(tau / plan.delta_t))
    if steps < 1 or abs(steps * plan.delta_t - tau) > 1e-8 * max(1.0, tau):
        raise ValueError(
            f"sweep duration {tau} is not an integral number of steps of {plan.delta_t}"
        )
    if protocol.kind == "CD" and profile is None:
        profile = agp_profile(instance, protocol)
    state = init_plus_state(instance.n)
    for k in range(steps):
        trotter_step(state, instance, protocol, profile, k * plan.delta_t, plan)
        nrm = state.norm()
        if abs(nrm - 1.0) > _NORM_TOL:
            raise NumericError(f"norm drift {abs(nrm - 1.0):.3e} at step {k + 1}/{steps}")
    return state


# -- expectations -----------------------------------------------------------------


def local_z_expectations(state: MpsState) -> tuple[np.ndarray, np.ndarray]:
    """All <Z_j> and <Z_j Z_{j+1}> from one pair of environment sweeps."""
    n = state.n
    lefts = [np.ones((1, 1), dtype=complex)]
    for j in range(n):
        tmp = np.tensordot(lefts[-1], state.tensors[j], axes=(1, 0))
        lefts.append(np.tensordot(state.tensors[j].conj(), tmp, axes=([0, 1], [0, 1])))
    rights = [np.ones((1, 1), dtype=complex)]
    for j in range(n - 1, -1, -1):
        tmp = np.tensordot(state.tensors[j].conj(), rights[-1], axes=(2, 0))  # (bra_l, p, ket_r)
        rights.append(np.tensordot(tmp, state.tensors[j], axes=([1, 2], [1, 2])))
    rights.reverse()  # rights[j] closes sites j..n-1, legs (bra_l, ket_l)
    norm_sq = float(np.real(lefts[-1][0, 0]))

    def site_op(j: int, op: np.ndarray) -> np.ndarray:
        tmp = np.tensordot(lefts[j], state.tensors[j], axes=(1, 0))  # (aL*, p, vR)
        tmp = np.tensordot(op, tmp, axes=(1, 1)).transpose(1, 0, 2)  # (aL*, p', vR)
        return np.tensordot(state.tensors[j].conj(), tmp, axes=([0, 1], [0, 1]))

    z = np.empty(n)
    for j in range(n):
        env = site_op(j, _SZ)
        z[j] = np.real(np.tensordot(env, rights[j + 1], axes=([0, 1], [0, 1]))) / norm_sq
    zz = np.empty(max(n - 1, 0))
    for j in range(n - 1):
        env = site_op(j, _SZ)
        tmp = np.tensordot(env, state.tensors[j + 1], axes=(1, 0))
        tmp = np.tensordot(_SZ, tmp, axes=(1, 1)).transpose(1, 0, 2)
        env2 = np.tensordot(state.tensors[j + 1].conj(), tmp, axes=([0, 1], [0, 1]))
        zz[j] = np.real(np.tensordot(env2, rights[j + 2], axes=([0, 1], [0, 1]))) / norm_sq
    return z, zz


def chain_problem_energy(state: MpsState, instance: Instance) -> float:
    """<H_p> for the diagonal chain problem Hamiltonian."""
    z, zz = local_z_expectations(state)
    return float(-(instance.b @ z) - (instance.J @ zz))


def problem_ground_fidelity(state: MpsState, instance: Instance) -> float:
    """Squared overlap with the (possibly degenerate) classical ground space.

    The diagonal problem Hamiltonian makes its ground space a set of
    computational basis states, so the fidelity is a sum of individual
    amplitude weights; each costs one O(n chi^2) contraction.
    """
    _, configs = classical_ground_configs(instance)
    return float(sum(abs(state.amplitude(c)) ** 2 for c in configs))


# -- imaginary time -----------------------------------------------------------------

#: imaginary step sizes, annealed downward as the energy settles
_IMAG_DT_SCHEDULE = (0.1, 0.01, 1e-3, 1e-4)

#: per-unit-imaginary-time energy slope treated as converged
_IMAG_ENERGY_RATE_TOL = 1e-10

#: energy is sampled every this many imaginary steps
_IMAG_CHECK_EVERY = 10

_IMAG_MAX_STEPS = 500_000


def imaginary_tebd_ground_state(
    instance: Instance,
    plan: TebdPlan | None = None,
    energy_log: list[float] | None = None,
) -> tuple[float, MpsState]:
    """Ground state of the final (diagonal) chain Hamiltonian by exp(-H dt).

    All terms of H_p commute, so the splitting carries no Trotter error
    and dt annealing only controls the approach rate.  Each level runs
    until the energy slope |dE|/dT drops below 1e-10, then dt shrinks;
    the state is renormalized every step.
    """
    if instance.topology != "chain":
        raise ValueError("imaginary TEBD requires the chain topology")
    plan = plan or TebdPlan()
    n = instance.n
    state = init_plus_state(n)
    energy = chain_problem_energy(state, instance)
    total_steps = 0
    for dt in _IMAG_DT_SCHEDULE:
        gate1 = _expm_herm_batch(
            -instance.b[:, None, None] * np.asarray(_SZ)[None], -dt
        )
        gate2 = (
            _expm_herm_batch(-instance.J[:, None, None] * np.asarray(_ZZ)[None], -dt)
            if n > 1
            else np.zeros((0, 4, 4))
        )
        while True:
            for _ in range(_IMAG_CHECK_EVERY):
                # single-site factors applied at the center to keep canonical form
                for j in range(n):
                    state.move_center(j)
                    apply_single_site_gate(state, j, gate1[j])
                    state.normalize()
                for bond in range(0, n - 1, 2):
                    apply_two_site_gate(
                        state, bond, gate2[bond], plan.chi_max, plan.trunc_tol
                    )
                for bond in range(n - 2 if (n - 2) % 2 == 1 else n - 3, 0, -2):
                    apply_two_site_gate(
                        state, bond, gate2[bond], plan.chi_max, plan.trunc_tol,
                        center_after="left",
                    )
                state.normalize()
                total_steps += 1
                if total_steps > _IMAG_MAX_STEPS:
                    raise ConvergenceError(
                        f"imaginary evolution exceeded {_IMAG_MAX_STEPS} steps"
                    )
            new_energy = chain_problem_energy(state, instance)
            if energy_log is not None:
                energy_log.append(new_energy)
            slope = abs(new_energy - energy) / (_IMAG_CHECK_EVERY * dt)
            energy = new_energy
            if slope < _IMAG_ENERGY_RATE_TOL:
                break
    state.canonicalize(0)
    state.normalize()
    return chain_problem_energy(state, instance), state


# -- checkpoints ---------------------------------------------------------------------

_MAGIC = b"MPSCHK01"


def save_mps(state: MpsState, path) -> None:
    """Binary checkpoint: magic, n, center, bond dims, then tensor data.

    All integers are little-endian int64; tensor data is row-major
    complex128 (little-endian doubles), one block per site with shape
    (bond[j], 2, bond[j+1]) where bond includes the unit boundaries.
    """
    bonds = [1, *state.bond_dims(), 1]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        header = np.array([state.n, state.center, *bonds], dtype="<i8")
        fh.write(header.tobytes())
        for t in state.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def load_mps(path) -> MpsState:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not an MPS checkpoint")
        n, center = np.frombuffer(fh.read(16), dtype="<i8")
        bonds = np.frombuffer(fh.read(8 * (int(n) + 1)), dtype="<i8")
        tensors = []
        for j in range(int(n)):
            shape = (int(bonds[j]), 2, int(bonds[j + 1]))
            count = shape[0] * shape[1] * shape[2]
            data = np.frombuffer(fh.read(16 * count), dtype="<c16")
            tensors.append(data.reshape(shape).astype(complex))
    return MpsState(tensors, int(center))
