"""Spin Hamiltonian families and their sparse action on S^z basis states.

Configurations are stored as arrays of ``+1/-1`` (twice the S^z eigenvalue).
Every family exposes its terms as bond lists with per-system coefficients, so
a batch of configurations can carry a different coupling vector per row:

* ``zz``: diagonal terms ``c * s_i * s_j``
* ``flip``: single-site flips with matrix element ``c_i``
* ``swap``: exchange of an antiparallel pair with matrix element ``c_ij``

The transverse-field Ising families use Pauli operators,
``H = -J sum s^z_i s^z_{i+1} - sum h_i s^x_i``, so the uniform chain is critical
at ``h/J = 1`` and the random chain with ``J = 1/e`` at ``h0 = 1``. Heisenberg
families use spin-1/2 operators, ``S_i . S_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import LatticeGeometry


class CouplingError(ValueError):
    """Coupling vector incompatible with a Hamiltonian family."""


class NonFiniteAmplitudeError(FloatingPointError):
    """An amplitude ratio overflowed or became NaN."""


@dataclass(frozen=True)
class CouplingVector:
    values: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.labels):
            raise CouplingError("coupling values and labels differ in length")

    def asarray(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)


@dataclass
class ConnectedElements:
    """Row ``<sigma| H`` of the Hamiltonian: diagonal entry plus off-diagonal pairs."""

    diagonal: float
    configs: np.ndarray
    elements: np.ndarray

    def __len__(self):
        return len(self.elements)


@dataclass(frozen=True)
class HamiltonianFamily:
    lattice: LatticeGeometry
    name: str = field(init=False, default="")
    coupling_labels: tuple[str, ...] = field(init=False, default=())
    conserves_magnetization: bool = field(init=False, default=False)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def n_couplings(self) -> int:
        return len(self.coupling_labels)

    # Term tables; overridden per family.
    zz_pairs = np.zeros((0, 2), dtype=int)
    swap_pairs = np.zeros((0, 2), dtype=int)

    def zz_coef(self, g: np.ndarray) -> np.ndarray:
        return np.zeros((len(g), 0))

    def flip_coef(self, g: np.ndarray) -> np.ndarray | None:
        return None

    def swap_coef(self, g: np.ndarray) -> np.ndarray | None:
        return None

    def check_gamma(self, gamma) -> np.ndarray:
        """Return couplings as a float array of shape (B, N_c), validating labels."""
        if isinstance(gamma, CouplingVector):
            if tuple(gamma.labels) != self.coupling_labels:
                raise CouplingError(
                    f"{self.name} expects couplings {self.coupling_labels}, got {gamma.labels}"
                )
            gamma = gamma.asarray()
        g = np.asarray(gamma, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape[-1] != self.n_couplings:
            raise CouplingError(
                f"{self.name} expects {self.n_couplings} couplings, got {g.shape[-1]}"
            )
        if not np.all(np.isfinite(g)):
            raise CouplingError(f"{self.name}: non-finite couplings")
        return g

    def coupling(self, values) -> CouplingVector:
        return CouplingVector(tuple(float(v) for v in np.ravel(values)), self.coupling_labels)

    def check_configs(self, sigma) -> np.ndarray:
        s = np.asarray(sigma)
        if s.ndim == 1:
            s = s[None, :]
        if s.shape[-1] != self.n_sites:
            raise ValueError(f"configuration length {s.shape[-1]} != {self.n_sites} sites")
        if not np.all(np.abs(s) == 1):
            raise ValueError("configurations must contain only +1/-1")
        return s

    def to_dict(self) -> dict:
        d = {"name": self.name, "lattice": self.lattice.to_dict()}
        if hasattr(self, "J"):
            d["J"] = float(self.J)
        return d

    def diagonal(self, sigma: np.ndarray, g: np.ndarray) -> np.ndarray:
        s = sigma.astype(float)
        if len(self.zz_pairs) == 0:
            return np.zeros(len(s))
        prod = s[:, self.zz_pairs[:, 0]] * s[:, self.zz_pairs[:, 1]]
        return np.einsum("bk,bk->b", prod, self.zz_coef(g))

    def off_diagonal(self, sigma: np.ndarray, g: np.ndarray):
        """Connected configurations (B, K, N) and their elements (B, K); zero elements are inert."""
        parts_c, parts_e = [], []
        B, N = sigma.shape
        fc = self.flip_coef(g)
        if fc is not None:
            conf = np.repeat(sigma[:, None, :], N, axis=1)
            ar = np.arange(N)
            conf[:, ar, ar] *= -1
            parts_c.append(conf)
            parts_e.append(np.broadcast_to(fc, (B, N)).astype(float))
        sc = self.swap_coef(g)
        if sc is not None and len(self.swap_pairs):
            i, j = self.swap_pairs[:, 0], self.swap_pairs[:, 1]
            anti = sigma[:, i] != sigma[:, j]
            K = len(i)
            conf = np.repeat(sigma[:, None, :], K, axis=1)
            ar = np.arange(K)
            conf[:, ar, i] = sigma[:, j]
            conf[:, ar, j] = sigma[:, i]
            parts_c.append(conf)
            parts_e.append(np.where(anti, sc, 0.0))
        if not parts_c:
            return np.zeros((B, 0, N), dtype=sigma.dtype), np.zeros((B, 0))
        return np.concatenate(parts_c, axis=1), np.concatenate(parts_e, axis=1)


def _nn_chain(lattice: LatticeGeometry) -> np.ndarray:
    if lattice.kind != "chain":
        raise ValueError("Ising families live on chains")
    return lattice.neighbors(1)


@dataclass(frozen=True)
class TransverseFieldIsing(HamiltonianFamily):
    """``-J sum s^z s^z - h sum s^x`` with a single coupling ``h/J``."""

    J: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "name", "tfi_chain")
        object.__setattr__(self, "coupling_labels", ("h/J",))
        object.__setattr__(self, "zz_pairs", _nn_chain(self.lattice))

    def zz_coef(self, g):
        return np.full((len(g), len(self.zz_pairs)), -self.J)

    def flip_coef(self, g):
        return np.repeat(-self.J * g[:, :1], self.n_sites, axis=1)


@dataclass(frozen=True)
class RandomTransverseFieldIsing(HamiltonianFamily):
    """Chain with site-dependent fields ``h_i``; ``J = 1/e`` places the critical point at ``h0 = 1``."""

    J: float = float(np.exp(-1.0))

    def __post_init__(self):
        object.__setattr__(self, "name", "random_tfi_chain")
        labels = tuple(f"h_{i}" for i in range(self.lattice.n_sites))
        object.__setattr__(self, "coupling_labels", labels)
        object.__setattr__(self, "zz_pairs", _nn_chain(self.lattice))

    def zz_coef(self, g):
        return np.full((len(g), len(self.zz_pairs)), -self.J)

    def flip_coef(self, g):
        return -g


@dataclass(frozen=True)
class _Heisenberg(HamiltonianFamily):
    """Shared machinery: ``sum_shell J_shell sum_bonds S_i . S_j`` in units of ``J1``."""

    def _setup(self, name, labels, shells):
        if self.lattice.kind != "square":
            raise ValueError("Heisenberg families are defined on the square lattice")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "coupling_labels", labels)
        object.__setattr__(self, "conserves_magnetization", True)
        pairs, owner = [], []
        for k, offsets in enumerate(shells):
            for off in offsets:
                b = self.lattice.bonds(off)
                pairs.append(b)
                owner.append(np.full(len(b), k))
        object.__setattr__(self, "zz_pairs", np.concatenate(pairs))
        object.__setattr__(self, "swap_pairs", self.zz_pairs)
        object.__setattr__(self, "_owner", np.concatenate(owner))

    def shell_couplings(self, g) -> np.ndarray:
        raise NotImplementedError

    def _bond_J(self, g):
        return self.shell_couplings(g)[:, self._owner]

    def zz_coef(self, g):
        return 0.25 * self._bond_J(g)

    def swap_coef(self, g):
        return 0.5 * self._bond_J(g)


@dataclass(frozen=True)
class J1J2J3Heisenberg(_Heisenberg):
    def __post_init__(self):
        L = self.lattice
        self._setup("j1j2j3_square", ("J2/J1", "J3/J1"), [L.offsets(1), L.offsets(2), L.offsets(3)])

    def shell_couplings(self, g):
        return np.column_stack([np.ones(len(g)), g[:, 0], g[:, 1]])


@dataclass(frozen=True)
class J1J2Heisenberg(_Heisenberg):
    def __post_init__(self):
        L = self.lattice
        self._setup("j1j2_square", ("J2/J1",), [L.offsets(1), L.offsets(2)])

    def shell_couplings(self, g):
        return np.column_stack([np.ones(len(g)), g[:, 0]])


@dataclass(frozen=True)
class GeneralizedJ1J2Heisenberg(_Heisenberg):
    """``J2R`` acts on the ``x+y`` diagonals and ``J2L`` on the ``x-y`` diagonals."""

    def __post_init__(self):
        self._setup(
            "generalized_j1j2_square",
            ("J2L/J1", "J2R/J1"),
            [[(1, 0), (0, 1)], [(1, -1)], [(1, 1)]],
        )

    def shell_couplings(self, g):
        return np.column_stack([np.ones(len(g)), g[:, 0], g[:, 1]])


FAMILIES = {
    "tfi_chain": TransverseFieldIsing,
    "random_tfi_chain": RandomTransverseFieldIsing,
    "j1j2j3_square": J1J2J3Heisenberg,
    "j1j2_square": J1J2Heisenberg,
    "generalized_j1j2_square": GeneralizedJ1J2Heisenberg,
}


def make_family(name: str, lattice: LatticeGeometry, **kwargs) -> HamiltonianFamily:
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown Hamiltonian family {name!r}") from None
    return cls(lattice, **kwargs)


def family_from_dict(d: dict) -> HamiltonianFamily:
    kw = {"J": d["J"]} if "J" in d else {}
    return make_family(d["name"], LatticeGeometry.from_dict(d["lattice"]), **kw)


def connected_configurations(family: HamiltonianFamily, gamma, sigma) -> ConnectedElements:
    """Nonzero entries of the row ``<sigma| H_gamma``."""
    g = family.check_gamma(gamma)
    s = family.check_configs(sigma)
    if len(s) != 1 or len(g) != 1:
        raise ValueError("connected_configurations takes a single configuration")
    diag = family.diagonal(s, g)[0]
    conf, elem = family.off_diagonal(s, g)
    keep = elem[0] != 0
    return ConnectedElements(float(diag), conf[0][keep], elem[0][keep])


def local_energies(
    family: HamiltonianFamily,
    gammas,
    sigma,
    log_psi: Callable[[np.ndarray, np.ndarray], np.ndarray],
    log_psi_sigma: np.ndarray | None = None,
) -> np.ndarray:
    """Local energies for a batch, one coupling row per configuration.

    ``log_psi(configs, gammas)`` evaluates the log-amplitude of a batch. Only
    connected configurations with a nonzero element are evaluated, in one call.
    """
    s = family.check_configs(sigma)
    g = family.check_gamma(gammas)
    if len(g) == 1 and len(s) > 1:
        g = np.repeat(g, len(s), axis=0)
    if len(g) != len(s):
        raise ValueError("need one coupling row per configuration")
    if log_psi_sigma is None:
        log_psi_sigma = log_psi(s, g)
    e_loc = family.diagonal(s, g).astype(complex)
    conf, elem = family.off_diagonal(s, g)
    rows, cols = np.nonzero(elem)
    if len(rows):
        lp = log_psi(conf[rows, cols], g[rows])
        with np.errstate(over="ignore", invalid="ignore"):
            contrib = elem[rows, cols] * np.exp(lp - log_psi_sigma[rows])
        if not np.all(np.isfinite(contrib)):
            raise NonFiniteAmplitudeError("non-finite amplitude ratio in local energy")
        np.add.at(e_loc, rows, contrib)
    return e_loc


def local_energy(family: HamiltonianFamily, gamma, sigma, log_psi) -> complex:
    """Local energy of a single configuration; ``log_psi`` as in :func:`local_energies`."""
    return complex(local_energies(family, gamma, sigma, log_psi)[0])


def dense_matrix(family: HamiltonianFamily, gamma) -> np.ndarray:
    """Full 2^N matrix assembled row by row from :func:`connected_configurations`.

    Basis state ``k`` has ``s_i = +1`` when bit ``i`` of ``k`` is zero.
    """
    N = family.n_sites
    if N > 14:
        raise ValueError("dense assembly limited to N <= 14")
    dim = 2**N
    states = all_configurations(N)
    g = family.check_gamma(gamma)
    gb = np.repeat(g, dim, axis=0)
    H = np.zeros((dim, dim))
    H[np.arange(dim), np.arange(dim)] = family.diagonal(states, gb)
    conf, elem = family.off_diagonal(states, gb)
    rows, cols = np.nonzero(elem)
    targets = config_index(conf[rows, cols])
    np.add.at(H, (rows, targets), elem[rows, cols])
    return H


def all_configurations(n: int) -> np.ndarray:
    k = np.arange(2**n)[:, None]
    bits = (k >> np.arange(n)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


def config_index(sigma: np.ndarray) -> np.ndarray:
    bits = (np.asarray(sigma) < 0).astype(np.int64)
    return bits @ (1 << np.arange(bits.shape[-1], dtype=np.int64))
