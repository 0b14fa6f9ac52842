"""Metropolis-Hastings sampling of |psi(sigma | gamma_k)|^2 for every system.

All chains of all systems advance together in one vectorized batch, so the cost
of a sweep depends on the total number of chains and not on how they are split
between systems. Chains are persistent: a :class:`ChainState` carries the
configurations, cached log-amplitudes and the generator state from one call to
the next, and burn-in is only applied to freshly initialized chains.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from .hamiltonians import CouplingError, HamiltonianFamily

ACCEPTANCE_FLOOR = 1e-3


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int
    chains_per_system: int = 8
    burn_in: int = 100
    stride: int = 1
    seed: int = 0
    acceptance_floor: float = ACCEPTANCE_FLOOR
    debug: bool = False

    def __post_init__(self):
        if self.n_samples <= 0 or self.chains_per_system <= 0:
            raise ValueError("n_samples and chains_per_system must be positive")
        if self.stride < 1:
            raise ValueError("stride must be at least one sweep")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")

    def per_system(self, n_systems: int) -> int:
        if self.n_samples % n_systems:
            raise ValueError(
                f"n_samples={self.n_samples} is not divisible by the number of systems {n_systems}")
        m = self.n_samples // n_systems
        if m % self.chains_per_system:
            raise ValueError(
                f"{m} samples per system is not divisible by chains_per_system={self.chains_per_system}")
        return m

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sampler keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ChainState:
    """Current configurations ``sigma`` (R, C, N) and their cached log-amplitudes."""

    sigma: np.ndarray
    log_psi: np.ndarray
    rng: np.random.Generator
    accepted: np.ndarray = field(default=None)
    proposed: np.ndarray = field(default=None)
    burned_in: bool = False

    def __post_init__(self):
        R = self.sigma.shape[0]
        if self.accepted is None:
            self.accepted = np.zeros(R, dtype=np.int64)
        if self.proposed is None:
            self.proposed = np.zeros(R, dtype=np.int64)

    def rng_state(self) -> dict:
        return copy.deepcopy(self.rng.bit_generator.state)

    def to_arrays(self) -> dict:
        return {"sigma": self.sigma, "log_psi": self.log_psi, "accepted": self.accepted,
                "proposed": self.proposed}


@dataclass
class SampleBatch:
    """Kept samples of one ``run_chains`` call, grouped by system."""

    samples: np.ndarray  # (R, M_k, N) int8
    log_psi: np.ndarray  # (R, M_k) complex
    acceptance: np.ndarray  # (R,)
    degenerate: bool

    @property
    def n_systems(self) -> int:
        return self.samples.shape[0]

    @property
    def per_system(self) -> int:
        return self.samples.shape[1]


def random_configurations(family: HamiltonianFamily, shape, rng) -> np.ndarray:
    """Uniform random configurations in the family's sampling sector."""
    n = family.lattice.n_sites
    shape = tuple(np.atleast_1d(shape))
    if family.conserves_magnetization:
        if n % 2:
            raise CouplingError("zero-magnetization sector needs an even number of sites")
        base = np.array([1] * (n // 2) + [-1] * (n // 2), dtype=np.int8)
        flat = np.tile(base, (int(np.prod(shape)), 1))
        return rng.permuted(flat, axis=1).reshape(shape + (n,))
    return rng.choice(np.array([-1, 1], dtype=np.int8), size=shape + (n,))


def propose(sigma: np.ndarray, family: HamiltonianFamily, rng) -> np.ndarray:
    """One symmetric move per row of ``sigma`` (shape (B, N)).

    Ising families flip a uniformly chosen site. Heisenberg families exchange a
    uniformly chosen (up, down) pair of sites; in a fixed-magnetization sector
    the number of such pairs is the same for every configuration, so the move
    is symmetric.
    """
    sigma = np.asarray(sigma)
    B, n = sigma.shape
    new = sigma.copy()
    rows = np.arange(B)
    if not family.conserves_magnetization:
        site = rng.integers(n, size=B)
        new[rows, site] = -new[rows, site]
        return new
    up = sigma > 0
    n_up = up.sum(axis=1)
    if np.any((n_up == 0) | (n_up == n)):
        raise SamplingError("no antiparallel pair: configuration outside the zero-magnetization sector")
    # pick the k-th up site and the l-th down site uniformly
    k = (rng.random(B) * n_up).astype(int)
    l = (rng.random(B) * (n - n_up)).astype(int)
    i = np.argmax(np.cumsum(up, axis=1) > k[:, None], axis=1)
    j = np.argmax(np.cumsum(~up, axis=1) > l[:, None], axis=1)
    new[rows, i] = sigma[rows, j]
    new[rows, j] = sigma[rows, i]
    return new


def init_chains(log_psi_fn, family, gammas, config: SamplerConfig, rng=None) -> ChainState:
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    R, C = len(gammas), config.chains_per_system
    rng = np.random.default_rng(config.seed) if rng is None else rng
    sigma = random_configurations(family, (R, C), rng)
    lp = _eval(log_psi_fn, sigma, gammas)
    return ChainState(sigma=sigma, log_psi=lp, rng=rng)


def _eval(log_psi_fn, sigma, gammas):
    R, C, n = sigma.shape
    g = np.repeat(gammas, C, axis=0)
    return np.asarray(log_psi_fn(sigma.reshape(R * C, n), g)).reshape(R, C)


def sweep(log_psi_fn, family, gammas, state: ChainState, n_sweeps: int = 1) -> None:
    """Advance every chain by ``n_sweeps`` sweeps of N proposals, in place."""
    R, C, n = state.sigma.shape
    g = np.repeat(gammas, C, axis=0)
    sigma = state.sigma.reshape(R * C, n)
    lp = state.log_psi.reshape(R * C)
    rng = state.rng
    for _ in range(n_sweeps * n):
        prop = propose(sigma, family, rng)
        lp_new = np.asarray(log_psi_fn(prop, g))
        log_ratio = 2.0 * (lp_new.real - lp.real)
        u = rng.random(R * C)
        with np.errstate(over="ignore", divide="ignore"):
            accept = np.log(u) < log_ratio
        sigma[accept] = prop[accept]
        lp[accept] = lp_new[accept]
        state.accepted += accept.reshape(R, C).sum(axis=1)
        state.proposed += C
    state.sigma = sigma.reshape(R, C, n)
    state.log_psi = lp.reshape(R, C)


def run_chains(log_psi_fn, family: HamiltonianFamily, gammas, config: SamplerConfig,
               state: ChainState | None = None) -> tuple[SampleBatch, ChainState]:
    """Draw exactly ``M / R`` samples per system.

    ``log_psi_fn(configs (B, N), gammas (B, N_c)) -> complex (B,)``. Returns the
    batch and the (possibly new) chain state; pass the state back in to continue
    the same chains without another burn-in.
    """
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    R = len(gammas)
    m = config.per_system(R)
    if state is None:
        state = init_chains(log_psi_fn, family, gammas, config)
    elif state.sigma.shape[:2] != (R, config.chains_per_system):
        raise ValueError("chain state does not match the ensemble/sampler configuration")
    else:
        # parameters may have changed since the last call
        state.log_psi = _eval(log_psi_fn, state.sigma, gammas)
    if not state.burned_in:
        sweep(log_psi_fn, family, gammas, state, config.burn_in)
        state.burned_in = True
    acc0, prop0 = state.accepted.copy(), state.proposed.copy()
    C, n = config.chains_per_system, family.lattice.n_sites
    per_chain = m // C
    samples = np.empty((R, per_chain, C, n), dtype=np.int8)
    lps = np.empty((R, per_chain, C), dtype=complex)
    for t in range(per_chain):
        sweep(log_psi_fn, family, gammas, state, config.stride)
        samples[:, t] = state.sigma
        lps[:, t] = state.log_psi
    if config.debug:
        fresh = _eval(log_psi_fn, state.sigma, gammas)
        if not np.allclose(fresh, state.log_psi, rtol=1e-10, atol=1e-10):
            raise SamplingError("cached log-amplitudes drifted from fresh evaluations")
    proposed = state.proposed - prop0
    acceptance = (state.accepted - acc0) / np.maximum(proposed, 1)
    batch = SampleBatch(
        samples=samples.reshape(R, m, n),
        log_psi=lps.reshape(R, m),
        acceptance=acceptance,
        degenerate=bool(np.any(acceptance < config.acceptance_floor)),
    )
    return batch, state
