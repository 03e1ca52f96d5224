"""Exact symbolic algebra over N-spin Pauli strings.

A string is stored in symplectic bit-mask form: ``i^phase * X^x * Z^z``
where ``x`` and ``z`` are N-bit masks and ``phase`` counts powers of the
imaginary unit (mod 4).  A site carrying both an x- and a z-bit is a Y up
to phase, since ``Y = i X Z``.  In this encoding a product is a pair of
mask XORs plus a phase update, two strings commute iff the symplectic
product of their masks is even, and distinct strings are orthonormal
under the normalized trace pairing ``<A, B> = Tr[A^dag B] / 2^N``.

Bit-order convention, fixed for every dense conversion in this package:
site 0 is the leftmost tensor factor and the MOST significant bit of a
computational-basis index, i.e. ``to_dense`` agrees with
``kron(op_site0, op_site1, ...)``.  Mask bit ``1 << (n - 1 - j)``
addresses site ``j``, so masks align bit-for-bit with basis indices.

Sums store one complex coefficient per canonical Hermitian string
``P(x, z) = i^{y} X^x Z^z`` with ``y`` the number of Y sites; a sum is
Hermitian exactly when all its coefficients are real.  Coefficients with
magnitude below ``PRUNE_TOL`` are dropped by every sum-producing
operation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import CapacityError

#: pruning threshold for sum coefficients
PRUNE_TOL = 1e-15

#: largest n_spins for which dense 2^N x 2^N conversion is allowed
DENSE_LIMIT = 14

_PHASES = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)  # i**k for k = 0..3


def site_bit(n: int, site: int) -> int:
    """Mask bit addressing ``site`` (0-based, site 0 most significant)."""
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for {n} spins")
    return 1 << (n - 1 - site)


def parity(values: np.ndarray | int, mask: int) -> np.ndarray | int:
    """Parity of the popcount of ``values & mask`` (vectorized)."""
    if isinstance(values, (int, np.integer)):
        return (int(values) & mask).bit_count() & 1
    return np.bitwise_count(values & mask).astype(np.int64) & 1


@dataclass(frozen=True)
class PauliString:
    """One Pauli string ``i^phase * X^x * Z^z`` on ``n`` spins."""

    n: int
    x: int
    z: int
    phase: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        full = (1 << self.n) - 1
        if not 0 <= self.x <= full or not 0 <= self.z <= full:
            raise ValueError("mask exceeds n-bit capacity")
        object.__setattr__(self, "phase", self.phase % 4)

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0, 0)

    @classmethod
    def from_ops(cls, n: int, ops: Iterable[tuple[int, str]]) -> "PauliString":
        """Hermitian string from ``(site, 'X'|'Y'|'Z')`` pairs (sites distinct)."""
        x = z = 0
        for site, kind in ops:
            bit = site_bit(n, site)
            if (x | z) & bit:
                raise ValueError(f"duplicate operator on site {site}")
            if kind == "X":
                x |= bit
            elif kind == "Y":
                x |= bit
                z |= bit
            elif kind == "Z":
                z |= bit
            else:
                raise ValueError(f"unknown Pauli kind {kind!r}")
        return cls(n, x, z, (x & z).bit_count() % 4)

    @classmethod
    def single(cls, n: int, site: int, kind: str) -> "PauliString":
        return cls.from_ops(n, [(site, kind)])

    # -- structure ---------------------------------------------------------

    @property
    def y_count(self) -> int:
        return (self.x & self.z).bit_count()

    @property
    def weight(self) -> int:
        return (self.x | self.z).bit_count()

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0 and self.phase == 0

    @property
    def is_hermitian(self) -> bool:
        # i^q X^x Z^z is Hermitian iff q and the Y-count agree mod 2
        return (self.phase - self.y_count) % 2 == 0

    def canonical_coeff(self) -> complex:
        """Scalar c with ``self = c * P(x, z)``, P the Hermitian literal string."""
        return _PHASES[(self.phase - self.y_count) % 4]

    def adjoint(self) -> "PauliString":
        return PauliString(self.n, self.x, self.z, (2 * self.y_count - self.phase) % 4)

    def commutes_with(self, other: "PauliString") -> bool:
        if self.n != other.n:
            raise ValueError("spin-count mismatch")
        return ((self.x & other.z).bit_count() + (other.x & self.z).bit_count()) % 2 == 0

    def label(self) -> str:
        """Human-readable form, e.g. ``-i XIZY``; site 0 leftmost."""
        chars = []
        for j in range(self.n):
            bit = site_bit(self.n, j)
            xb, zb = bool(self.x & bit), bool(self.z & bit)
            chars.append("Y" if (xb and zb) else "X" if xb else "Z" if zb else "I")
        prefix = {1.0 + 0j: "", 1j: "i ", -1.0 + 0j: "-", -1j: "-i "}[self.canonical_coeff()]
        return prefix + "".join(chars)

    def to_dense(self) -> np.ndarray:
        return PauliSum(self.n, {(self.x, self.z): self.canonical_coeff()}).to_dense()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"PauliString({self.label()!r}, n={self.n})"


class PauliSum:
    """Sparse sum of canonical Hermitian Pauli strings with complex weights."""

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping[tuple[int, int], complex] | None = None):
        if n < 1:
            raise ValueError("n must be a positive integer")
        self.n = n
        data: dict[tuple[int, int], complex] = {}
        if terms:
            full = (1 << n) - 1
            for (x, z), c in terms.items():
                if not 0 <= x <= full or not 0 <= z <= full:
                    raise ValueError("mask exceeds n-bit capacity")
                if abs(c) > PRUNE_TOL:
                    data[(x, z)] = complex(c)
        self._terms = data

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, n: int) -> "PauliSum":
        return cls(n)

    @classmethod
    def from_strings(cls, pairs: Iterable[tuple[complex, PauliString]]) -> "PauliSum":
        """Sum of ``coeff * string`` contributions (strings may repeat)."""
        n = None
        data: dict[tuple[int, int], complex] = {}
        for coeff, s in pairs:
            if n is None:
                n = s.n
            elif s.n != n:
                raise ValueError("spin-count mismatch")
            key = (s.x, s.z)
            data[key] = data.get(key, 0.0) + coeff * s.canonical_coeff()
        if n is None:
            raise ValueError("empty term list has no spin count")
        return cls(n, data)

    # -- mapping access ----------------------------------------------------

    def items(self) -> Iterator[tuple[tuple[int, int], complex]]:
        return iter(self._terms.items())

    def coeff(self, x: int, z: int) -> complex:
        return self._terms.get((x, z), 0.0)

    def strings(self) -> Iterator[tuple[PauliString, complex]]:
        for (x, z), c in self._terms.items():
            yield PauliString(self.n, x, z, (x & z).bit_count() % 4), c

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    @property
    def is_hermitian(self) -> bool:
        return all(abs(c.imag) <= PRUNE_TOL * max(1.0, abs(c)) for c in self._terms.values())

    # -- arithmetic --------------------------------------------------------

    def _check(self, other: "PauliSum") -> None:
        if self.n != other.n:
            raise ValueError("spin-count mismatch")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        data = dict(self._terms)
        for k, c in other._terms.items():
            data[k] = data.get(k, 0.0) + c
        return PauliSum(self.n, data)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-1.0) * other

    def __neg__(self) -> "PauliSum":
        return (-1.0) * self

    def __rmul__(self, scalar: complex) -> "PauliSum":
        return PauliSum(self.n, {k: scalar * c for k, c in self._terms.items()})

    def __mul__(self, scalar: complex) -> "PauliSum":
        return self.__rmul__(scalar)

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        """Operator product of two sums (pairwise string products)."""
        self._check(other)
        data: dict[tuple[int, int], complex] = {}
        for sa, ca in self.strings():
            for sb, cb in other.strings():
                p = multiply(sa, sb)
                key = (p.x, p.z)
                data[key] = data.get(key, 0.0) + ca * cb * p.canonical_coeff()
        return PauliSum(self.n, data)

    def to_dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise CapacityError(f"dense conversion limited to {DENSE_LIMIT} spins")
        dim = 1 << self.n
        out = np.zeros((dim, dim), dtype=complex)
        idx = np.arange(dim, dtype=np.uint64)
        for (x, z), c in self._terms.items():
            y = (x & z).bit_count()
            signs = 1.0 - 2.0 * parity(idx, z)
            out[idx ^ np.uint64(x), idx] += (c * _PHASES[y % 4]) * signs
        return out

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        parts = [f"{c:+.6g} {s.label()}" for s, c in self.strings()]
        return f"PauliSum(n={self.n}: " + " ".join(parts[:6]) + (" ..." if len(parts) > 6 else "") + ")"


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Pauli group product ``a * b`` with the accumulated power-of-i phase."""
    if a.n != b.n:
        raise ValueError("spin-count mismatch")
    phase = (a.phase + b.phase + 2 * (a.z & b.x).bit_count()) % 4
    return PauliString(a.n, a.x ^ b.x, a.z ^ b.z, phase)


def commutator(a: PauliString | PauliSum, b: PauliString | PauliSum) -> PauliSum:
    """``[a, b] = ab - ba`` as a sum; strings either commute or anticommute."""
    if isinstance(a, PauliString) and isinstance(b, PauliString):
        if a.n != b.n:
            raise ValueError("spin-count mismatch")
        if a.commutes_with(b):
            return PauliSum.zero(a.n)
        p = multiply(a, b)
        return PauliSum(a.n, {(p.x, p.z): 2.0 * p.canonical_coeff()})
    asum = a if isinstance(a, PauliSum) else PauliSum.from_strings([(1.0, a)])
    bsum = b if isinstance(b, PauliSum) else PauliSum.from_strings([(1.0, b)])
    asum._check(bsum)
    data: dict[tuple[int, int], complex] = {}
    for sa, ca in asum.strings():
        for sb, cb in bsum.strings():
            if sa.commutes_with(sb):
                continue
            p = multiply(sa, sb)
            key = (p.x, p.z)
            data[key] = data.get(key, 0.0) + 2.0 * ca * cb * p.canonical_coeff()
    return PauliSum(asum.n, data)


def inner_product(a: PauliSum, b: PauliSum) -> complex:
    """Normalized trace pairing ``Tr[a^dag b] / 2^N`` via key overlap."""
    if a.n != b.n:
        raise ValueError("spin-count mismatch")
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    acc = 0.0 + 0.0j
    if small is a:
        for k, c in a._terms.items():
            other = b._terms.get(k)
            if other is not None:
                acc += c.conjugate() * other
    else:
        for k, c in b._terms.items():
            other = a._terms.get(k)
            if other is not None:
                acc += other.conjugate() * c
    return acc


def to_dense(op: PauliString | PauliSum) -> np.ndarray:
    """Dense matrix in the computational z-basis (site 0 = most significant bit)."""
    return op.to_dense()
