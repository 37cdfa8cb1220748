"""Simulated tomography experiments on the gateway.

Each experiment prepares (|0> + |n0>)/sqrt(2) with n0 in the gateway, lets
it evolve for time t and reads out the transverse components of gateway
spin n.  The recorded signal is

    s(t) = exp(i E0 t) <n|U(t)|n0> = sum_j <n|E_j><E_j|n0> exp(-i (E_j - E0) t)

so only shifted energies are ever visible.  With the standard Pauli
operators <X_n> = Re s and <Y_n> = -Im s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig
from .model import Eigensystem

EXACT = "exact"


@dataclass(frozen=True)
class ExperimentConfig:
    initial_sites: tuple  # experiment families n0, all in the gateway
    observed_sites: tuple
    times: np.ndarray
    shots: int | str = EXACT
    seed: int | None = None

    def validate(self, gateway=None) -> "ExperimentConfig":
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise InvalidConfig("sample times must be a nonempty 1-d sequence")
        if times[0] < 0 or np.any(np.diff(times) <= 0):
            raise InvalidConfig("sample times must be nonnegative and strictly increasing")
        if not self.initial_sites or not self.observed_sites:
            raise InvalidConfig("need at least one initial and one observed site")
        if gateway is not None:
            outside = [n for n in (*self.initial_sites, *self.observed_sites) if n not in gateway]
            if outside:
                raise InvalidConfig(f"sites {sorted(set(outside))} are outside the gateway")
        if self.shots != EXACT:
            if not isinstance(self.shots, (int, np.integer)) or self.shots < 1:
                raise InvalidConfig(f"shots must be a positive integer or 'exact', got {self.shots!r}")
            if self.seed is None:
                raise InvalidConfig("shot mode needs an rng seed")
        return self


@dataclass(frozen=True)
class Signal:
    site: int
    initial_site: int
    times: np.ndarray
    values: np.ndarray  # complex


@dataclass
class TomographyDataset:
    times: np.ndarray
    pairs: list  # [(n0, n), ...]
    values: np.ndarray  # (len(pairs), len(times)) complex
    metadata: dict = field(default_factory=dict)

    def signal(self, initial_site: int, site: int) -> Signal:
        k = self.pairs.index((initial_site, site))
        return Signal(site, initial_site, self.times, self.values[k])

    def family(self, initial_site: int) -> tuple[list, np.ndarray]:
        """Observed sites and their signals for one initial site."""
        rows = [k for k, (n0, _) in enumerate(self.pairs) if n0 == initial_site]
        return [self.pairs[k][1] for k in rows], self.values[rows]

    @property
    def initial_sites(self) -> list:
        return sorted({n0 for n0, _ in self.pairs})

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


def exact_values(eig: Eigensystem, n0: int, n: int, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    amp = eig.vectors[n] * eig.vectors[n0]
    return np.exp(-1j * np.outer(times, eig.shifted)) @ amp


def exact_signal(eig: Eigensystem, n0: int, n: int, times) -> Signal:
    times = np.asarray(times, dtype=float)
    return Signal(n, n0, times, exact_values(eig, n0, n, times))


def _quadrature_means(expectations, shots, rng):
    p_up = np.clip((1.0 + expectations) / 2.0, 0.0, 1.0)
    hits = rng.binomial(shots, p_up)
    return 2.0 * hits / shots - 1.0


def sample_rng(seed: int, n0: int, n: int, k: int) -> np.random.Generator:
    """Independent stream per (seed, experiment, time index).

    Keyed rather than sequential, so any partition of the sample grid
    reproduces the same numbers.
    """
    return np.random.default_rng([seed, n0, n, k])


def simulate_tomography(eig: Eigensystem, config: ExperimentConfig, gateway=None) -> TomographyDataset:
    config.validate(gateway)
    times = np.asarray(config.times, dtype=float)
    pairs = [(n0, n) for n0 in config.initial_sites for n in config.observed_sites]
    values = np.empty((len(pairs), len(times)), dtype=complex)
    for row, (n0, n) in enumerate(pairs):
        exact = exact_values(eig, n0, n, times)
        if config.shots == EXACT:
            values[row] = exact
            continue
        for k, s in enumerate(exact):
            rng = sample_rng(config.seed, n0, n, k)
            x = _quadrature_means(np.array([s.real, -s.imag]), config.shots, rng)
            values[row, k] = x[0] - 1j * x[1]
    meta = {
        "shots": config.shots,
        "seed": config.seed,
        "dt": float(times[1] - times[0]) if len(times) > 1 else None,
    }
    return TomographyDataset(times, pairs, values, meta)


def nyquist_times(
    bound: float, n_frequencies: int, oversample: float = 2.0, samples_per_frequency: int = 8
) -> np.ndarray:
    """Uniform grid t_k = k dt with dt = pi / (oversample * bound).

    The grid's Nyquist band is |omega| < oversample * bound.
    """
    if not bound > 0:
        raise InvalidConfig(f"spectral bound must be positive, got {bound}")
    if oversample <= 0 or n_frequencies < 1:
        raise InvalidConfig("oversample and n_frequencies must be positive")
    dt = math.pi / (oversample * bound)
    return dt * np.arange(samples_per_frequency * n_frequencies)

