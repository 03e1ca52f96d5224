"""Seeded ensemble runs, exponential fits, cost curves, and CSV export.

A run sweeps (size, instance, protocol) with one disorder instance per
(master_seed, N, i) triple, derived by folding the triple through
splitmix64 so ensembles are reproducible and extendable without
correlations.  The same instance is reused across protocols, which makes
per-instance protocol comparisons meaningful.

Fidelity is computed against the engine-appropriate ground state: dense
or iterative diagonalization for the exact engine, the classical
dynamic-program ground space for the MPS engine (the problem Hamiltonian
is diagonal, and degenerate ground spaces enter as a summed projector
either way).

The implementation cost of CD driving integrates the normalized trace
norm of the CD term: Tr[H_CD^2]/2^N = lambda_dot(t)^2 sum_m c_m^2 by
Pauli orthonormality, evaluated with composite Simpson quadrature on a
uniform time grid of the same size as the coefficient profile's grid.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import simpson

from . import exact, mps
from .agp import AgpCoefficients, agp_profile
from .errors import ConfigError, FitError
from .model import (
    Instance,
    Protocol,
    PROTOCOL_LABELS,
    TOPOLOGIES,
    build_problem,
    lambda_dot,
    lambda_t,
    sample_instance,
)
from .paulis import DENSE_LIMIT

ENGINES = ("exact", "mps", "auto")

CSV_HEADER = "topology,N,seed,protocol,tau,fidelity,cost,engine,chi_max_reached,wall_ms"

#: mean fidelities at or below this floor are excluded from log-space fits
FIT_FLOOR = 1e-300

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, n: int, index: int) -> int:
    """Instance seed from (master_seed, N, i), folded left to right."""
    out = _splitmix64(master_seed & _MASK64)
    out = _splitmix64(out ^ (n & _MASK64))
    return _splitmix64(out ^ (index & _MASK64))


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything needed to reproduce one ensemble sweep."""

    topology: str
    sizes: tuple[int, ...]
    n_instances: int = 50
    master_seed: int = 0
    protocols: tuple[str, ...] = ("QA", "CD1", "CD2")
    tau: float = 10.0
    gamma_value: float = 1.0
    coupling_value: float = 1.0
    engine: str = "auto"
    delta_t: float = 0.05
    chi_max: int = 100
    trunc_tol: float = 1e-12

    def __post_init__(self) -> None:
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "protocols", tuple(self.protocols))
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")
        if not self.sizes or any(n < 1 for n in self.sizes):
            raise ConfigError("sizes must be a nonempty list of positive integers")
        if self.n_instances < 1:
            raise ConfigError("n_instances must be >= 1")
        unknown = [p for p in self.protocols if p not in PROTOCOL_LABELS]
        if unknown or not self.protocols:
            raise ConfigError(f"unknown protocols {unknown}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        # capacity and compatibility checks happen here, before any run
        engine = self.resolved_engine()
        if engine == "exact" and max(self.sizes) > DENSE_LIMIT:
            raise ConfigError(
                f"exact engine limited to N <= {DENSE_LIMIT}, got {max(self.sizes)}"
            )
        if engine == "mps":
            if self.topology != "chain":
                raise ConfigError("MPS engine requires the chain topology")
            if "CDexact" in self.protocols:
                raise ConfigError("CDexact driving is not expressible as TEBD gates")
            steps = round(self.tau / self.delta_t)
            if steps < 1 or abs(steps * self.delta_t - self.tau) > 1e-8 * max(1.0, self.tau):
                raise ConfigError("tau must be an integral number of delta_t steps")

    def resolved_engine(self) -> str:
        if self.engine != "auto":
            return self.engine
        return "mps" if self.topology == "chain" else "exact"

    def plan(self) -> mps.TebdPlan:
        return mps.TebdPlan(self.delta_t, self.chi_max, self.trunc_tol)


@dataclass(frozen=True)
class RunRecord:
    """One (instance, protocol) evolution result.

    chi_max_reached holds the peak bond dimension for MPS runs and the
    step count for exact runs; wall_ms is the only nondeterministic
    field.
    """

    topology: str
    n: int
    seed: int
    protocol: str
    tau: float
    fidelity: float
    cost: float
    engine: str
    chi_max_reached: int
    wall_ms: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.fidelity <= 1.0 + 1e-9:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")
        if self.cost < 0.0:
            raise ValueError("cost must be nonnegative")


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of ln F = ln r - s N."""

    r: float
    s: float
    points: tuple[tuple[int, float], ...]
    residual: float
    excluded: int = 0

    def __post_init__(self) -> None:
        if not self.r > 0:
            raise ValueError("prefactor must be positive")


def implementation_cost(
    instance: Instance,
    protocol: Protocol,
    coefficients: AgpCoefficients | None = None,
    quad_points: int | None = None,
) -> float:
    """Time-integrated normalized trace norm of the CD term (zero for QA)."""
    if protocol.kind == "QA":
        return 0.0
    if coefficients is None:
        coefficients = agp_profile(instance, protocol)
    if quad_points is None:
        quad_points = coefficients.lambda_grid.size
    tau = protocol.schedule.tau
    t = np.linspace(0.0, tau, quad_points)
    rates = lambda_dot(t, tau)
    coeffs = coefficients.at_array(lambda_t(t, tau))
    integrand = rates**2 * np.sum(coeffs**2, axis=1)
    return float(simpson(integrand, x=t))


def _run_instance(config: EnsembleConfig, n: int, index: int) -> list[RunRecord]:
    """All protocol runs for one instance; heavy shared work happens once."""
    seed = derive_seed(config.master_seed, n, index)
    instance = sample_instance(
        seed, n, config.topology, config.gamma_value, config.coupling_value
    )
    engine = config.resolved_engine()
    ground = exact.ground_state(build_problem(instance)) if engine == "exact" else None
    records = []
    for label in config.protocols:
        protocol = Protocol.from_label(label, config.tau)
        start = time.perf_counter()
        profile = agp_profile(instance, protocol) if protocol.kind == "CD" else None
        if engine == "exact":
            psi = exact.evolve(instance, protocol, profile=profile)
            fidelity = ground.overlap_fidelity(psi)
            chi_or_steps = exact.default_steps(config.tau)
        else:
            state = mps.evolve_tebd(instance, protocol, config.plan(), profile=profile)
            fidelity = mps.problem_ground_fidelity(state, instance)
            chi_or_steps = state.max_chi_seen
        cost = implementation_cost(instance, protocol, profile)
        wall_ms = (time.perf_counter() - start) * 1e3
        records.append(
            RunRecord(
                config.topology, n, seed, label, config.tau,
                float(fidelity), cost, engine, int(chi_or_steps), wall_ms,
            )
        )
    return records


def _run_instance_star(args) -> list[RunRecord]:
    return _run_instance(*args)


def run_ensemble(config: EnsembleConfig, workers: int | None = None) -> list[RunRecord]:
    """Every (size, instance, protocol) record, in deterministic order.

    Worker processes only change wall-clock fields: jobs are independent
    per instance and results are merged in job order, so output record
    order never depends on completion order.
    """
    if workers is None:
        workers = int(os.environ.get("CDANNEAL_WORKERS", "1"))
    jobs = [(config, n, i) for n in config.sizes for i in range(config.n_instances)]
    if workers <= 1:
        grouped = [_run_instance_star(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            grouped = list(pool.map(_run_instance_star, jobs, chunksize=1))
    return [record for group in grouped for record in group]


# -- aggregation ---------------------------------------------------------------


def slice_stats(records: Iterable[RunRecord]) -> dict[tuple[str, int], dict[str, float]]:
    """Per-(protocol, N) fidelity statistics: mean, gmean, min, max, count."""
    groups: dict[tuple[str, int], list[float]] = {}
    for rec in records:
        groups.setdefault((rec.protocol, rec.n), []).append(rec.fidelity)
    out = {}
    for key, vals in groups.items():
        arr = np.asarray(vals)
        gmean = float(np.exp(np.mean(np.log(arr)))) if np.all(arr > 0) else 0.0
        out[key] = {
            "mean": float(arr.mean()),
            "gmean": gmean,
            "min": float(arr.min()),
            "max": float(arr.max()),
            "count": int(arr.size),
        }
    return out


def mean_fidelity_points(records: Iterable[RunRecord], protocol: str) -> list[tuple[int, float]]:
    stats = slice_stats(records)
    points = [(n, st["mean"]) for (p, n), st in stats.items() if p == protocol]
    return sorted(points)


def fit_exponential(points: Sequence[tuple[int, float]]) -> FitResult:
    """ln-linear least squares F(N) = r exp(-s N), floor-excluding dead points."""
    usable = [(int(n), float(f)) for n, f in points if f > FIT_FLOOR]
    excluded = len(points) - len(usable)
    if len(usable) < 2:
        raise FitError(f"need at least 2 points above {FIT_FLOOR}, got {len(usable)}")
    ns = np.array([n for n, _ in usable], dtype=float)
    logs = np.log([f for _, f in usable])
    slope, intercept = np.polyfit(ns, logs, 1)
    resid = logs - (slope * ns + intercept)
    return FitResult(
        r=float(np.exp(intercept)),
        s=float(-slope),
        points=tuple(usable),
        residual=float(np.sqrt(np.mean(resid**2))),
        excluded=excluded,
    )


def histogram(
    records: Iterable[RunRecord], protocol: str, n: int, n_bins: int = 10
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform-bin fidelity counts over [min, max] of the (protocol, N) slice."""
    vals = np.array([r.fidelity for r in records if r.protocol == protocol and r.n == n])
    if vals.size == 0:
        raise ValueError(f"no records for protocol {protocol!r} at N={n}")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    counts, edges = np.histogram(vals, bins=n_bins, range=(vals.min(), vals.max()))
    return counts, edges


def fidelity_ratio(records: Iterable[RunRecord]) -> dict[tuple[str, int], float]:
    """Mean fidelity of each (protocol, N) slice over the QA baseline at that N."""
    stats = slice_stats(records)
    qa_means = {n: st["mean"] for (p, n), st in stats.items() if p == "QA"}
    out = {}
    for (p, n), st in stats.items():
        if n not in qa_means:
            raise ValueError(f"missing QA baseline for N={n}")
        out[(p, n)] = st["mean"] / qa_means[n]
    return out


# -- serialization ---------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_records_csv(records: Iterable[RunRecord], path) -> None:
    """Deterministic CSV (17 significant digits), written atomically."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            row = [
                rec.topology, rec.n, rec.seed, rec.protocol, rec.tau,
                rec.fidelity, rec.cost, rec.engine, rec.chi_max_reached, rec.wall_ms,
            ]
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def read_records_csv(path) -> list[RunRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER.split(","):
            raise ConfigError(f"{path} does not have the expected results header")
        for row in reader:
            records.append(
                RunRecord(
                    row["topology"], int(row["N"]), int(row["seed"]), row["protocol"],
                    float(row["tau"]), float(row["fidelity"]), float(row["cost"]),
                    row["engine"], int(row["chi_max_reached"]), float(row["wall_ms"]),
                )
            )
    return records


def fit_to_dict(protocol: str, fit: FitResult) -> dict:
    return {
        "protocol": protocol,
        "r": fit.r,
        "s": fit.s,
        "residual": fit.residual,
        "excluded_points": fit.excluded,
        "points": [[n, f] for n, f in fit.points],
    }


def config_to_dict(config: EnsembleConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(config)}


def config_from_dict(data: dict) -> EnsembleConfig:
    names = {f.name for f in fields(EnsembleConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    if "topology" not in data or "sizes" not in data:
        raise ConfigError("config requires at least 'topology' and 'sizes'")
    try:
        return EnsembleConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
