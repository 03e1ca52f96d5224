"""Annealing schedules, Ising disorder instances, and H0(lambda) assembly.

The sweep interpolates H0(lambda) = (1 - lambda) * H_d + lambda * H_p from
the transverse driver H_d = -sum_j gamma_j X_j to a classical Ising problem
H_p, which is either an open chain

    H_p = -sum_j b_j Z_j - sum_j J_j Z_j Z_{j+1}

or fully connected

    H_p = -sum_j b_j Z_j - sum_{j<k} J_jk Z_j Z_k.

Disorder lives in the longitudinal fields b_j (standard normal draws);
transverse strengths and couplings are uniform constants in every study
this package reproduces, though per-site values round-trip through the
instance files.

Units: hbar = 1, energies dimensionless, time measured against the sweep
duration tau.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError, NumericError
from .paulis import DENSE_LIMIT, PauliString, PauliSum

TOPOLOGIES = ("chain", "all_to_all")

_MASK64 = (1 << 64) - 1


# -- sweep profile -----------------------------------------------------------


def lambda_t(t, tau: float):
    """Sweep value lambda(t) = sin^2[(pi/2) sin^2(pi t / (2 tau))].

    Smooth, monotone, with vanishing first derivative at both ends; hits
    0 and 1 exactly at t = 0 and t = tau (the inner argument is computed
    from t/tau so the endpoint trig evaluates exactly in floats).
    """
    t = np.asarray(t, dtype=float)
    _check_time(t, tau)
    inner = np.sin(0.5 * np.pi * (t / tau))
    out = np.sin(0.5 * np.pi * inner * inner) ** 2
    return float(out) if out.ndim == 0 else out


def lambda_dot(t, tau: float):
    """Analytic d lambda/dt: (pi^2 / 4 tau) sin(2A) sin(2B).

    B = pi t / (2 tau), A = (pi/2) sin^2 B.  Peak value pi^2/(4 tau) at
    t = tau/2; endpoint values vanish (to ~1e-32, the float residue of
    sin(pi)).
    """
    t = np.asarray(t, dtype=float)
    _check_time(t, tau)
    b = 0.5 * np.pi * (t / tau)
    a = 0.5 * np.pi * np.sin(b) ** 2
    out = (np.pi**2 / (4.0 * tau)) * np.sin(2.0 * a) * np.sin(2.0 * b)
    return float(out) if out.ndim == 0 else out


def _check_time(t: np.ndarray, tau: float) -> None:
    if not (isinstance(tau, (int, float)) and math.isfinite(tau)) or tau <= 0:
        raise ValueError(f"tau must be a positive finite duration, got {tau!r}")
    if np.any(t < 0.0) or np.any(t > tau):
        raise ValueError(f"time outside [0, tau={tau}]")


@dataclass(frozen=True)
class Schedule:
    """Sweep duration plus the profile lambda(t) and its derivative."""

    tau: float

    def __post_init__(self) -> None:
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")

    def lam(self, t):
        return lambda_t(t, self.tau)

    def lam_dot(self, t):
        return lambda_dot(t, self.tau)


# -- protocols ---------------------------------------------------------------

PROTOCOL_LABELS = ("QA", "CD1", "CD2", "CDexact")


@dataclass(frozen=True)
class Protocol:
    """Driving protocol: bare sweep (QA) or CD-assisted with a given ansatz.

    ``order`` is None for QA, else 1, 2, or the string "exact".
    """

    kind: str
    schedule: Schedule
    order: int | str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("QA", "CD"):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.kind == "QA" and self.order is not None:
            raise ValueError("QA carries no ansatz order")
        if self.kind == "CD" and self.order not in (1, 2, "exact"):
            raise ValueError(f"CD order must be 1, 2 or 'exact', got {self.order!r}")

    @property
    def label(self) -> str:
        if self.kind == "QA":
            return "QA"
        return f"CD{self.order}"

    @classmethod
    def qa(cls, tau: float) -> "Protocol":
        return cls("QA", Schedule(tau))

    @classmethod
    def cd(cls, order: int | str, tau: float) -> "Protocol":
        return cls("CD", Schedule(tau), order)

    @classmethod
    def from_label(cls, label: str, tau: float) -> "Protocol":
        if label == "QA":
            return cls.qa(tau)
        if label in ("CD1", "CD2"):
            return cls.cd(int(label[2:]), tau)
        if label == "CDexact":
            return cls.cd("exact", tau)
        raise ConfigError(f"unknown protocol label {label!r}; expected one of {PROTOCOL_LABELS}")


# -- instances ---------------------------------------------------------------


def coupling_pairs(n: int, topology: str) -> list[tuple[int, int]]:
    """Site pairs aligned index-by-index with the flattened coupling array.

    Chain: (j, j+1), open boundaries.  All-to-all: the strictly lower
    triangle of the symmetric coupling matrix, row-major, reported as
    (smaller, larger) site labels: (0,1), (0,2), (1,2), (0,3), ...
    """
    if topology == "chain":
        return [(j, j + 1) for j in range(n - 1)]
    if topology == "all_to_all":
        return [(k, j) for j in range(1, n) for k in range(j)]
    raise ValueError(f"unknown topology {topology!r}")


def _frozen(arr: Any, name: str, length: int) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.shape != (length,):
        raise ValueError(f"{name} must have shape ({length},), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Instance:
    """One disorder realization: topology, fields, couplings, provenance seed."""

    topology: str
    n: int
    seed: int
    gamma: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", int(self.seed))
        n_J = self.n - 1 if self.topology == "chain" else self.n * (self.n - 1) // 2
        object.__setattr__(self, "gamma", _frozen(self.gamma, "gamma", self.n))
        object.__setattr__(self, "b", _frozen(self.b, "b", self.n))
        object.__setattr__(self, "J", _frozen(self.J, "J", n_J))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return coupling_pairs(self.n, self.topology)


def _normal_draw(seed: int, site: int) -> float:
    """One standard-normal variate from a counter-based stream keyed (seed, site).

    Philox-4x64 keyed by the pair, first two raw 64-bit words mapped to
    open-interval uniforms, combined by Box-Muller.  Fully specified, so
    instances are bit-identical across platforms and numpy versions.
    """
    key = np.array([seed & _MASK64, site & _MASK64], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(2)
    u1 = ((int(raw[0]) >> 11) + 1) * 2.0**-53  # in (0, 1], log-safe
    u2 = (int(raw[1]) >> 11) * 2.0**-53  # in [0, 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def sample_instance(
    seed: int,
    n_spins: int,
    topology: str,
    gamma_value: float = 1.0,
    coupling_value: float = 1.0,
) -> Instance:
    """Draw b_j ~ N(0,1) per site; gamma and couplings are uniform constants."""
    if n_spins < 1:
        raise ValueError("n_spins must be >= 1")
    if topology not in TOPOLOGIES:
        raise ValueError(f"topology must be one of {TOPOLOGIES}, got {topology!r}")
    b = np.array([_normal_draw(seed, j) for j in range(n_spins)])
    gamma = np.full(n_spins, float(gamma_value))
    n_J = n_spins - 1 if topology == "chain" else n_spins * (n_spins - 1) // 2
    J = np.full(n_J, float(coupling_value))
    return Instance(topology, n_spins, int(seed) & _MASK64, gamma, b, J)


# -- Hamiltonian assembly ----------------------------------------------------


def build_driver(instance: Instance) -> PauliSum:
    """Transverse driver H_d = -sum_j gamma_j X_j."""
    return PauliSum.from_strings(
        [(-g, PauliString.single(instance.n, j, "X")) for j, g in enumerate(instance.gamma)]
    )


def build_problem(instance: Instance) -> PauliSum:
    """Classical Ising target H_p (diagonal in the z basis)."""
    n = instance.n
    terms: list[tuple[complex, PauliString]] = [
        (-bj, PauliString.single(n, j, "Z")) for j, bj in enumerate(instance.b)
    ]
    for (j, k), coupling in zip(instance.pairs, instance.J):
        terms.append((-coupling, PauliString.from_ops(n, [(j, "Z"), (k, "Z")])))
    return PauliSum.from_strings(terms)


def build_h0(instance: Instance, lam: float) -> PauliSum:
    """Interpolated sweep Hamiltonian (1 - lambda) H_d + lambda H_p."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return (1.0 - lam) * build_driver(instance) + lam * build_problem(instance)


def build_dh0(instance: Instance) -> PauliSum:
    """Sweep generator d H0 / d lambda = H_p - H_d, independent of lambda."""
    return build_problem(instance) - build_driver(instance)


def classical_ground_configs(
    instance: Instance, tol: float | None = None, max_configs: int = 1024
) -> tuple[float, list[int]]:
    """Minimizers of the diagonal chain problem by dynamic program.

    Returns the minimum classical energy and every basis index attaining
    it within ``tol`` (site 0 is the most significant bit, spin up is bit
    0).  Gaussian field draws make exact ties measure-zero, but
    handcrafted instances with zero fields do degenerate; enumeration
    stops with an error past ``max_configs`` states.
    """
    if instance.topology != "chain":
        raise ValueError("the dynamic program requires the chain topology")
    n = instance.n
    spins = np.array([1.0, -1.0])
    # g[j][s] = min energy of sites j+1..n-1 plus bond j, given spin s at j
    g = np.zeros((n, 2))
    for j in range(n - 2, -1, -1):
        options = (
            -instance.J[j] * np.outer(spins, spins)
            - instance.b[j + 1] * spins[None, :]
            + g[j + 1][None, :]
        )
        g[j] = options.min(axis=1)
    site0 = -instance.b[0] * spins + g[0]
    energy = float(site0.min())
    if tol is None:
        tol = 1e-10 * max(1.0, abs(energy))
    configs: list[int] = []
    # DFS over spin choices whose completed energy stays within tol
    stack = [(0, int(s), float(-instance.b[0] * spins[s])) for s in (1, 0)]
    while stack:
        j, prefix, acc = stack.pop()
        if j == n - 1:
            configs.append(prefix)
            if len(configs) > max_configs:
                raise NumericError(
                    f"more than {max_configs} degenerate ground configurations"
                )
            continue
        s = prefix & 1
        for c in (1, 0):
            step = -instance.J[j] * spins[s] * spins[c] - instance.b[j + 1] * spins[c]
            if acc + step + g[j + 1][c] <= energy + tol:
                stack.append((j + 1, (prefix << 1) | c, acc + step))
    return energy, sorted(configs)


# -- instance files ----------------------------------------------------------


def instance_to_dict(instance: Instance) -> dict[str, Any]:
    return {
        "topology": instance.topology,
        "n": instance.n,
        "seed": instance.seed,
        "gamma": instance.gamma.tolist(),
        "b": instance.b.tolist(),
        "J": instance.J.tolist(),
    }


def instance_from_dict(data: dict[str, Any]) -> Instance:
    try:
        return Instance(
            topology=data["topology"],
            n=int(data["n"]),
            seed=int(data["seed"]),
            gamma=data["gamma"],
            b=data["b"],
            J=data["J"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed instance record: {exc}") from exc


def save_instance(instance: Instance, path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_instance(path: str | os.PathLike) -> Instance:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read instance file {path}: {exc}") from exc
    return instance_from_dict(data)
