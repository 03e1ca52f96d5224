"""Variational coefficients for approximate counter-diabatic driving.

The gauge-potential ansatz A' = sum_m c_m O_m over odd-Y Pauli strings is
fixed, at each sweep value lambda, by minimizing the normalized operator
distance

    S(c) = || dH0/dlambda + i [A', H0(lambda)] ||^2,

a quadratic form in c.  Writing C_m = i [O_m, H0] and using the trace
pairing, S(c) = s0 - 2 w.c + c.M.c with M_mn = <C_m, C_n> and
w_m = -<dH0, C_m>, so the stationarity condition is the real symmetric
positive-semidefinite linear system M c = w.

H0 is affine in lambda, so C_m = C^d_m + lambda C^delta_m with
C^d_m = i[O_m, H_d] and C^delta_m = i[O_m, H_p - H_d].  M is therefore
quadratic and w linear in lambda; both are assembled once from two real
design matrices and then evaluated on a dense lambda grid for the price
of a few small matrix products per point.

Coefficient naming: single-spin terms keep the customary alpha_j.  The
four two-spin families are labeled c_yx, c_xy, c_yz, c_zy after their
Pauli content (so the transverse field strength keeps the name gamma
without collision).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_factor, cho_solve

from .errors import CapacityError, NumericError
from .model import Instance, Protocol, build_dh0, build_driver, build_problem, coupling_pairs
from .paulis import DENSE_LIMIT, PauliString, PauliSum, commutator, inner_product

DEFAULT_GRID = 512

#: relative Tikhonov weight applied when inverting M
DEFAULT_REG_SCALE = 1e-12

ORDERS = (1, 2, "exact")

_TWO_SPIN_FAMILIES = (("yx", "Y", "X"), ("xy", "X", "Y"), ("yz", "Y", "Z"), ("zy", "Z", "Y"))


@dataclass(frozen=True)
class AgpAnsatz:
    """Ordered odd-Y string basis with human-readable coefficient labels."""

    order: int | str
    n: int
    basis: tuple[PauliString, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.basis) != len(self.labels):
            raise ValueError("basis/label length mismatch")
        for s in self.basis:
            if s.y_count % 2 == 0:
                raise ValueError(f"ansatz string {s.label()} has even Y-count")

    def __len__(self) -> int:
        return len(self.basis)


def _odd_y_strings(n: int) -> list[PauliString]:
    """Every Hermitian string on n spins with an odd number of Y factors."""
    if n > DENSE_LIMIT:
        raise CapacityError(f"exact ansatz limited to {DENSE_LIMIT} spins")
    dim = 1 << n
    zs = np.arange(dim, dtype=np.uint64)
    out = []
    for x in range(dim):
        odd = np.nonzero(np.bitwise_count(np.uint64(x) & zs) & 1)[0]
        for z in odd:
            out.append(PauliString(n, x, int(z), int(x & int(z)).bit_count() % 4))
    return out


def build_ansatz(order: int | str, instance: Instance) -> AgpAnsatz:
    """Ansatz bases: order 1 = single-spin Y; order 2 adds two-spin families.

    Order 2 pairs follow the instance topology: nearest neighbors on the
    chain, all pairs j<k in the all-to-all case.  ``order="exact"``
    enumerates every odd-Y string, which spans the full antisymmetric
    imaginary sector reachable by the gauge potential of a real
    Hamiltonian.
    """
    n = instance.n
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    singles = [PauliString.single(n, j, "Y") for j in range(n)]
    labels = [f"alpha_{j}" for j in range(n)]
    if order == 1:
        return AgpAnsatz(order, n, tuple(singles), tuple(labels))
    if order == 2:
        pairs = coupling_pairs(n, instance.topology)
        basis = list(singles)
        for name, op_a, op_b in _TWO_SPIN_FAMILIES:
            for j, k in pairs:
                basis.append(PauliString.from_ops(n, [(j, op_a), (k, op_b)]))
                labels.append(f"c_{name}_{j}_{k}")
        return AgpAnsatz(order, n, tuple(basis), tuple(labels))
    strings = _odd_y_strings(n)
    return AgpAnsatz("exact", n, tuple(strings), tuple(s.label() for s in strings))


# -- action assembly ----------------------------------------------------------


@dataclass(frozen=True)
class ActionSystem:
    """Quadratic action S(c) = s0 - 2 w.c + c.M.c at one sweep value."""

    M: np.ndarray
    w: np.ndarray
    s0: float = 0.0

    def __post_init__(self) -> None:
        M = np.asarray(self.M, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or w.shape != (M.shape[0],):
            raise ValueError("M must be square and w aligned with it")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.w.shape[0]


def _real_sum(op: PauliSum) -> PauliSum:
    """Drop the numerically-zero imaginary parts of a Hermitian sum."""
    return PauliSum(op.n, {k: c.real for k, c in op.items()})


def _commutant_rows(basis: Sequence[PauliString], h: PauliSum) -> list[PauliSum]:
    return [_real_sum(1j * commutator(PauliSum.from_strings([(1.0, o)]), h)) for o in basis]


def assemble_action_system(h0: PauliSum, dh0: PauliSum, ansatz: AgpAnsatz) -> ActionSystem:
    """Direct assembly at a fixed Hamiltonian: M_mn = <C_m,C_n>, w_m = -<dH0,C_m>."""
    if not (h0.n == dh0.n == ansatz.n):
        raise ValueError("spin-count mismatch between Hamiltonians and ansatz")
    rows = _commutant_rows(ansatz.basis, h0)
    dim = len(rows)
    M = np.empty((dim, dim))
    w = np.empty(dim)
    for m in range(dim):
        w[m] = -inner_product(dh0, rows[m]).real
        for k in range(m + 1):
            M[m, k] = M[k, m] = inner_product(rows[m], rows[k]).real
    return ActionSystem(M, w, inner_product(dh0, dh0).real)


@dataclass(frozen=True)
class ActionPolynomials:
    """lambda-resolved action data: M(l) = A0 + l A1 + l^2 A2, w(l) = w0 + l w1."""

    ansatz: AgpAnsatz
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    s0: float

    def system_at(self, lam: float) -> ActionSystem:
        M = self.A0 + lam * self.A1 + lam * lam * self.A2
        w = self.w0 + lam * self.w1
        return ActionSystem(M, w, self.s0)


def assemble_action_polynomials(instance: Instance, ansatz: AgpAnsatz) -> ActionPolynomials:
    h_d = build_driver(instance)
    dh0 = build_dh0(instance)
    rows_d = _commutant_rows(ansatz.basis, h_d)
    rows_delta = _commutant_rows(ansatz.basis, dh0)
    # union of string keys over all commutants fixes the design-matrix columns
    cols: dict[tuple[int, int], int] = {}
    for row in (*rows_d, *rows_delta):
        for key, _ in row.items():
            cols.setdefault(key, len(cols))
    dim, width = len(ansatz), len(cols)
    phi_d = np.zeros((dim, width))
    phi_delta = np.zeros((dim, width))
    for m in range(dim):
        for key, c in rows_d[m].items():
            phi_d[m, cols[key]] = c.real
        for key, c in rows_delta[m].items():
            phi_delta[m, cols[key]] = c.real
    d_vec = np.zeros(width)
    for key, idx in cols.items():
        d_vec[idx] = dh0.coeff(*key).real
    cross = phi_d @ phi_delta.T
    return ActionPolynomials(
        ansatz=ansatz,
        A0=phi_d @ phi_d.T,
        A1=cross + cross.T,
        A2=phi_delta @ phi_delta.T,
        w0=-phi_d @ d_vec,
        w1=-phi_delta @ d_vec,
        s0=float(inner_product(dh0, dh0).real),
    )


# -- solving -------------------------------------------------------------------


#: Cholesky pivot ratio below which a system is treated as rank-deficient
_PIVOT_RATIO = 1e-7


def solve_coefficients(
    system: ActionSystem, regularization: float | None = None
) -> tuple[np.ndarray, float, bool]:
    """Minimize the action: returns (coefficients, residual ||Mc - w||, degenerate).

    Well-conditioned systems solve by Cholesky directly.  A failed or
    near-zero-pivot factorization flags the system degenerate (the ansatz
    has flat directions, e.g. strings whose commutants coincide); those
    systems are solved as (M + reg*I)c = w in the eigenbasis of M with
    null directions truncated to zero, which is the minimum-norm member
    of the Tikhonov family.  w always lies in the range of M = Phi Phi^T,
    so the truncation never discards a forced component, and any two
    minimizers differ only by operators commuting with H0.
    """
    M, w = system.M, system.w
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(w))):
        raise NumericError("action system contains non-finite entries")
    dim = system.dim
    if dim == 0:
        return np.zeros(0), 0.0, False
    if regularization is None:
        regularization = DEFAULT_REG_SCALE * float(np.trace(M)) / dim
    if regularization < 0:
        raise ValueError("regularization must be nonnegative")
    degenerate = False
    c: np.ndarray | None = None
    try:
        factor = cho_factor(M, lower=True)
        pivots = np.abs(np.diag(factor[0]))
        if pivots.min() <= _PIVOT_RATIO * pivots.max():
            degenerate = True
        else:
            c = cho_solve(factor, w)
    except np.linalg.LinAlgError:
        degenerate = True
    if c is None:
        mu, vecs = np.linalg.eigh(M)
        cutoff = max(float(mu[-1]), 0.0) * 1e-12
        weights = vecs.T @ w
        inverse = np.where(mu > cutoff, 1.0 / (mu + regularization), 0.0)
        c = vecs @ (inverse * weights)
    if not np.all(np.isfinite(c)):
        raise NumericError("coefficient solve produced non-finite values")
    residual = float(np.linalg.norm(M @ c - w))
    return c, residual, degenerate


def action_value(system: ActionSystem, c: np.ndarray) -> float:
    """Evaluate S(c) = s0 - 2 w.c + c.M.c."""
    c = np.asarray(c, dtype=float)
    return float(system.s0 - 2.0 * system.w @ c + c @ system.M @ c)


# -- lambda profiles -----------------------------------------------------------


@dataclass
class AgpCoefficients:
    """Solved coefficients on a lambda grid plus a cubic interpolation rule."""

    ansatz: AgpAnsatz
    lambda_grid: np.ndarray
    coeffs: np.ndarray
    residual_max: float = 0.0
    degenerate: bool = False
    _spline: CubicSpline | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        grid = np.asarray(self.lambda_grid, dtype=float)
        coeffs = np.asarray(self.coeffs, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0 or grid[-1] != 1.0:
            raise ValueError("lambda grid must cover [0, 1] inclusive")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("lambda grid must be strictly increasing")
        if coeffs.shape != (grid.size, len(self.ansatz)):
            raise ValueError("coefficient array misaligned with grid/basis")
        if not np.all(np.isfinite(coeffs)):
            raise NumericError("non-finite AGP coefficients")
        self.lambda_grid = grid
        self.coeffs = coeffs
        if len(self.ansatz) > 0:
            self._spline = CubicSpline(grid, coeffs, axis=0)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.ansatz.labels

    def at(self, lam: float) -> np.ndarray:
        """Coefficient vector at arbitrary lambda via cubic spline in lambda."""
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {lam}")
        if self._spline is None:
            return np.zeros(0)
        return np.asarray(self._spline(lam), dtype=float)

    def at_array(self, lams: np.ndarray) -> np.ndarray:
        """Coefficient rows, shape (len(lams), basis size)."""
        lams = np.asarray(lams, dtype=float)
        if np.any(lams < 0.0) or np.any(lams > 1.0):
            raise ValueError("lambda values must lie in [0, 1]")
        if self._spline is None:
            return np.zeros((lams.size, 0))
        return np.asarray(self._spline(lams), dtype=float).reshape(lams.size, -1)

    def to_csv(self, path) -> None:
        header = ",".join(["lambda", *self.labels])
        table = np.column_stack([self.lambda_grid, self.coeffs])
        lines = [header]
        for row in table:
            lines.append(",".join(f"{v:.17g}" for v in row))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def agp_profile(
    instance: Instance, protocol: Protocol, grid_size: int = DEFAULT_GRID
) -> AgpCoefficients:
    """Solve the stationarity system on a uniform lambda grid over [0, 1]."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    grid = np.linspace(0.0, 1.0, grid_size)
    if protocol.kind == "QA":
        empty = AgpAnsatz(1, instance.n, (), ())
        return AgpCoefficients(empty, grid, np.zeros((grid_size, 0)))
    ansatz = build_ansatz(protocol.order, instance)
    polys = assemble_action_polynomials(instance, ansatz)
    coeffs = np.empty((grid_size, len(ansatz)))
    residual_max = 0.0
    degenerate = False
    for i, lam in enumerate(grid):
        c, res, flag = solve_coefficients(polys.system_at(float(lam)))
        coeffs[i] = c
        residual_max = max(residual_max, res)
        degenerate = degenerate or flag
    return AgpCoefficients(ansatz, grid, coeffs, residual_max, degenerate)


def cd_hamiltonian(
    instance: Instance, protocol: Protocol, coefficients: AgpCoefficients, t: float
) -> PauliSum:
    """Counter-diabatic term lambda_dot(t) * sum_m c_m(lambda(t)) O_m."""
    tau = protocol.schedule.tau
    if not 0.0 <= t <= tau:
        raise ValueError(f"time outside [0, tau={tau}]")
    if protocol.kind == "QA":
        return PauliSum.zero(instance.n)
    lam = protocol.schedule.lam(t)
    rate = protocol.schedule.lam_dot(t)
    c = coefficients.at(lam)
    return PauliSum.from_strings(
        [(rate * cm, om) for cm, om in zip(c, coefficients.ansatz.basis)]
    ) if len(c) else PauliSum.zero(instance.n)


def closed_form_single_spin_alpha(lam, gamma: float, b: float):
    """Order-1 coefficient for N=1: alpha = -gamma*b / (2[((1-l)g)^2 + (l b)^2])."""
    lam = np.asarray(lam, dtype=float)
    denom = ((1.0 - lam) * gamma) ** 2 + (lam * b) ** 2
    out = -gamma * b / (2.0 * denom)
    return float(out) if out.ndim == 0 else out
