"""Exact reference solutions for small clusters.

Two independent routes are provided:

* Free fermions for (random) transverse-field Ising chains. After a Hadamard
  rotation and a Jordan-Wigner transformation the chain becomes a quadratic
  Majorana Hamiltonian in each parity sector; correlators follow from Wick's
  theorem as Pfaffians of the Majorana two-point matrix.
* Exact diagonalization built from bit operations on integer basis states,
  restricted to the zero-magnetization sector for Heisenberg families, with a
  fully reorthogonalized Lanczos solver.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .hamiltonians import HamiltonianFamily
from .lattice import LatticeGeometry


class LevelCrossingError(RuntimeError):
    """The ground state changes character inside a finite-difference stencil."""


# --------------------------------------------------------------------------- #
# Pfaffian
# --------------------------------------------------------------------------- #


def pfaffian(A: np.ndarray) -> complex:
    """Pfaffian of an antisymmetric matrix by pivoted Parlett-Reid elimination."""
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("pfaffian needs a square matrix")
    if n % 2:
        return 0.0
    pf = 1.0 + 0j
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.abs(A[k + 1 :, k]).argmax())
        if kp != k + 1:
            A[[k + 1, kp], :] = A[[kp, k + 1], :]
            A[:, [k + 1, kp]] = A[:, [kp, k + 1]]
            pf = -pf
        if A[k + 1, k] == 0:
            return 0.0
        pf *= A[k, k + 1]
        if k + 2 < n:
            tau = A[k, k + 2 :] / A[k, k + 1]
            col = A[k + 2 :, k + 1].copy()
            A[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return pf


# --------------------------------------------------------------------------- #
# Free fermions
# --------------------------------------------------------------------------- #


@dataclass
class FreeFermionSolution:
    """Ground state of a periodic transverse-field Ising chain.

    ``spectrum`` holds the quasiparticle energies of the selected parity sector,
    ``majorana`` the two-point matrix ``<g_m g_n> - delta_mn`` of the ground
    state (Majoranas ordered ``a_1, b_1, a_2, b_2, ...``).
    """

    energy: float
    spectrum: np.ndarray
    majorana: np.ndarray
    sector: int

    @property
    def n_sites(self) -> int:
        return self.majorana.shape[0] // 2

    def zz(self, i: int, j: int) -> float:
        """``<s^z_i s^z_j>`` (Pauli) in the original basis."""
        if i == j:
            return 1.0
        i, j = min(i, j), max(i, j)
        idx = []
        for l in range(i, j):
            idx += [2 * l + 1, 2 * (l + 1)]
        sub = self.majorana[np.ix_(idx, idx)]
        sub = np.triu(sub, 1) - np.triu(sub, 1).T
        val = (-1j) ** (j - i) * pfaffian(sub)
        return float(val.real)

    def zz_matrix(self) -> np.ndarray:
        N = self.n_sites
        C = np.eye(N)
        for i in range(N):
            for j in range(i + 1, N):
                C[i, j] = C[j, i] = self.zz(i, j)
        return C


def _majorana_matrix(h: np.ndarray, J: np.ndarray, parity: int) -> np.ndarray:
    """K with ``H = (i/4) g^T K g`` for the rotated chain in parity sector ``parity``."""
    N = len(h)
    K = np.zeros((2 * N, 2 * N))

    def term(m, n, c):  # adds i*c*g_m*g_n
        K[m, n] += 2 * c
        K[n, m] -= 2 * c

    for i in range(N):
        term(2 * i, 2 * i + 1, h[i])
    for i in range(N - 1):
        term(2 * i + 1, 2 * (i + 1), J[i])
    term(2 * N - 1, 0, -parity * J[N - 1])
    return K


def _canonical_form(K: np.ndarray):
    """Orthogonal W and energies eps >= 0 with ``K = W (+) eps_k [[0,1],[-1,0]] W^T``."""
    T, Z = scipy.linalg.schur(K, output="real")
    n = K.shape[0]
    blocks, singles = [], []
    k = 0
    while k < n:
        if k + 1 < n and abs(T[k + 1, k]) > 1e-14 * max(1.0, np.abs(T).max()):
            blocks.append(k)
            k += 2
        else:
            singles.append(k)
            k += 1
    order, eps = [], []
    for k in blocks:
        b = T[k, k + 1]
        if b >= 0:
            order += [k, k + 1]
        else:
            order += [k + 1, k]
        eps.append(abs(b))
    for a, b in zip(singles[::2], singles[1::2]):
        order += [a, b]
        eps.append(0.0)
    W = Z[:, order]
    return W, np.array(eps)


def _gaussian_state(W: np.ndarray, occupation: np.ndarray) -> np.ndarray:
    n = W.shape[0]
    G = np.zeros((n, n), dtype=complex)
    for k, nk in enumerate(occupation):
        G[2 * k, 2 * k + 1] = 1j * (1 - 2 * nk)
        G[2 * k + 1, 2 * k] = -1j * (1 - 2 * nk)
    return W @ G @ W.T


def solve_tfi_chain(h, J) -> FreeFermionSolution:
    """Exact ground state of ``-sum J_i s^z_i s^z_{i+1} - sum h_i s^x_i`` with periodic boundaries.

    Both fermion-parity sectors are solved; in each, the lowest state with the
    parity matching the sector's boundary condition is kept, and the lower of
    the two is returned.
    """
    h = np.asarray(h, dtype=float)
    N = len(h)
    if N < 2:
        raise ValueError("need at least two sites")
    J = np.broadcast_to(np.asarray(J, dtype=float), (N,)).copy()
    best = None
    for parity in (+1, -1):
        W, eps = _canonical_form(_majorana_matrix(h, J, parity))
        occ = np.zeros(len(eps))
        energy = -0.5 * eps.sum()
        vac_parity = int(np.sign(np.linalg.det(W)))
        if vac_parity != parity:
            m = int(np.argmin(eps))
            occ[m] = 1
            energy += eps[m]
        if best is None or energy < best[0] - 1e-12:
            best = (energy, eps, W, occ, parity)
    energy, eps, W, occ, parity = best
    return FreeFermionSolution(
        energy=float(energy), spectrum=np.sort(eps), majorana=_gaussian_state(W, occ), sector=parity
    )


def tfi_fields(family: HamiltonianFamily, gamma) -> tuple[np.ndarray, float]:
    """Site fields and bond coupling of an Ising-family member."""
    g = np.ravel(np.asarray(gamma, dtype=float))
    N = family.n_sites
    if family.name == "tfi_chain":
        return np.full(N, g[0] * family.J), family.J
    if family.name == "random_tfi_chain":
        return g.copy(), family.J
    raise ValueError(f"{family.name} has no free-fermion solution")


# --------------------------------------------------------------------------- #
# Exact diagonalization
# --------------------------------------------------------------------------- #


@dataclass
class EDSolution:
    energies: np.ndarray
    vector: np.ndarray
    basis: np.ndarray
    n_sites: int
    residual: float

    @property
    def energy(self) -> float:
        return float(self.energies[0])

    def configurations(self) -> np.ndarray:
        """Basis states as +1/-1 arrays (bit set means spin down)."""
        bits = (self.basis[:, None] >> np.arange(self.n_sites)[None, :]) & 1
        return (1 - 2 * bits).astype(np.int8)

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.vector) ** 2
        return p / p.sum()


def _ed_terms(family: HamiltonianFamily, gamma):
    """(zz bonds, fields, exchange bonds) as lists of (i, j, coupling)."""
    g = np.ravel(np.asarray(gamma, dtype=float))
    lat = family.lattice
    zz, xchg, fields = [], [], None
    if family.name in ("tfi_chain", "random_tfi_chain"):
        h, J = tfi_fields(family, g)
        N = lat.n_sites
        zz = [(i, (i + 1) % N, -J) for i in range(N)]
        fields = -h
        return zz, fields, xchg
    if family.name == "j1j2j3_square":
        shells = [((1, 0), (0, 1)), ((1, 1), (1, -1)), ((2, 0), (0, 2))]
        Js = [1.0, g[0], g[1]]
    elif family.name == "j1j2_square":
        shells = [((1, 0), (0, 1)), ((1, 1), (1, -1))]
        Js = [1.0, g[0]]
    elif family.name == "generalized_j1j2_square":
        shells = [((1, 0), (0, 1)), ((1, -1),), ((1, 1),)]
        Js = [1.0, g[0], g[1]]
    else:
        raise ValueError(f"no exact-diagonalization terms for {family.name}")
    for offs, Jk in zip(shells, Js):
        if Jk == 0:
            continue
        for off in offs:
            for i in range(lat.n_sites):
                j = lat.site(lat.coords()[i] + np.asarray(off))
                zz.append((i, j, 0.25 * Jk))
                xchg.append((i, j, 0.5 * Jk))
    return zz, fields, xchg


def sector_basis(n_sites: int, zero_magnetization: bool) -> np.ndarray:
    states = np.arange(2**n_sites, dtype=np.int64)
    if not zero_magnetization:
        return states
    if n_sites % 2:
        raise ValueError("zero-magnetization sector needs an even number of sites")
    pop = np.zeros_like(states)
    for i in range(n_sites):
        pop += (states >> i) & 1
    return states[pop == n_sites // 2]


def sparse_hamiltonian(family: HamiltonianFamily, gamma, basis: np.ndarray | None = None):
    """Sparse matrix of ``H_gamma`` on ``basis`` (integer bit patterns)."""
    N = family.n_sites
    if basis is None:
        basis = sector_basis(N, family.conserves_magnetization)
    dim = len(basis)
    full = len(basis) == 2**N
    zz, fields, xchg = _ed_terms(family, gamma)

    def spin(i):
        return 1 - 2 * ((basis >> i) & 1)

    diag = np.zeros(dim)
    for i, j, c in zz:
        diag += c * spin(i) * spin(j)
    rows, cols, vals = [np.arange(dim)], [np.arange(dim)], [diag]

    def locate(states):
        if full:
            return states
        pos = np.searchsorted(basis, states)
        return pos

    if fields is not None:
        for i, c in enumerate(fields):
            if c == 0:
                continue
            rows.append(np.arange(dim))
            cols.append(locate(basis ^ (1 << i)))
            vals.append(np.full(dim, c))
    for i, j, c in xchg:
        anti = ((basis >> i) & 1) != ((basis >> j) & 1)
        src = np.nonzero(anti)[0]
        tgt = locate(basis[src] ^ ((1 << i) | (1 << j)))
        rows.append(src)
        cols.append(tgt)
        vals.append(np.full(len(src), c))
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    return H.tocsr(), basis


def lanczos(matvec, v0: np.ndarray, k: int = 1, tol: float = 1e-10, max_krylov: int = 250,
            max_restarts: int = 20):
    """Lowest ``k`` eigenpairs of a symmetric operator by Lanczos with full reorthogonalization.

    Restarts from the best Ritz vector until the ground-state residual drops below ``tol``.
    """
    dim = len(v0)
    m_max = min(max_krylov, dim)
    v = np.asarray(v0, dtype=float)
    v = v / np.linalg.norm(v)
    for _ in range(max_restarts):
        V = np.zeros((m_max + 1, dim))
        V[0] = v
        alpha, beta = [], []
        m = 0
        for j in range(m_max):
            w = matvec(V[j])
            a = V[j] @ w
            w = w - a * V[j] - (beta[-1] * V[j - 1] if j else 0.0)
            for _pass in range(2):
                w -= V[: j + 1].T @ (V[: j + 1] @ w)
            b = np.linalg.norm(w)
            alpha.append(a)
            m = j + 1
            if b < 1e-14:
                break
            beta.append(b)
            V[j + 1] = w / b
            if m >= k and (m % 10 == 0 or m == m_max):
                theta, y = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta[: m - 1]))
                if np.all(np.abs(b * y[-1, :k]) < 0.1 * tol):
                    break
        theta, y = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta[: m - 1]))
        x = V[:m].T @ y[:, 0]
        x /= np.linalg.norm(x)
        res = np.linalg.norm(matvec(x) - theta[0] * x)
        if res <= tol:
            return theta[:k], x, res
        v = x
    return theta[:k], x, res


def exact_diagonalize(family: HamiltonianFamily, gamma, k: int = 1, method: str = "auto",
                      seed: int = 0) -> EDSolution:
    """Ground state (and ``k - 1`` excited energies) of one family member.

    Heisenberg families are solved in the zero-magnetization sector; Ising chains
    in the full basis, starting Lanczos from a spin-flip-even vector so the
    symmetric ground state is selected.
    """
    N = family.n_sites
    if N > 24:
        raise ValueError(f"{N} sites exceed the exact-diagonalization limit")
    H, basis = sparse_hamiltonian(family, gamma)
    dim = H.shape[0]
    if method == "auto":
        method = "dense" if dim <= 1024 else "lanczos"
    if method == "dense":
        w, v = np.linalg.eigh(H.toarray())
        vec = v[:, 0]
        energies = w[:k]
    elif method == "lanczos":
        rng = np.random.default_rng(seed)
        v0 = rng.random(dim) + 0.5
        flip = _flip_partner(basis, N)
        v0 = v0 + v0[flip]
        energies, vec, _ = lanczos(H.dot, v0, k=k)
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(H @ vec - energies[0] * vec))
    # fix the global phase so the largest component is positive
    vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
    return EDSolution(np.asarray(energies), vec, basis, N, res)


def _flip_partner(basis: np.ndarray, n_sites: int) -> np.ndarray:
    flipped = basis ^ ((1 << n_sites) - 1)
    return np.searchsorted(basis, flipped)


def ground_energy(family: HamiltonianFamily, gamma) -> float:
    """Exact ground energy, through free fermions when available."""
    if family.name in ("tfi_chain", "random_tfi_chain"):
        h, J = tfi_fields(family, gamma)
        return solve_tfi_chain(h, J).energy
    return exact_diagonalize(family, gamma).energy


# --------------------------------------------------------------------------- #
# Dense expectation values and fidelity susceptibility
# --------------------------------------------------------------------------- #


def zz_correlations(sol: EDSolution) -> np.ndarray:
    """``<s^z_i s^z_j>`` (Pauli) for an ED ground state."""
    s = sol.configurations().astype(float)
    p = sol.probabilities()
    return np.einsum("k,ki,kj->ij", p, s, s)


def spin_correlations(family: HamiltonianFamily, sol: EDSolution) -> np.ndarray:
    """``<S_i . S_j>`` (spin-1/2) for an ED ground state."""
    N = family.n_sites
    basis, v = sol.basis, sol.vector
    full = len(basis) == 2**N
    out = np.zeros((N, N))
    s = 1 - 2 * ((basis[:, None] >> np.arange(N)[None, :]) & 1)
    p = v**2 / (v @ v)
    zz = 0.25 * np.einsum("k,ki,kj->ij", p, s, s)
    for i in range(N):
        for j in range(N):
            if i == j:
                out[i, j] = 0.75
                continue
            anti = s[:, i] != s[:, j]
            src = np.nonzero(anti)[0]
            tgt_states = basis[src] ^ ((1 << i) | (1 << j))
            tgt = tgt_states if full else np.searchsorted(basis, tgt_states)
            xy = 0.5 * np.sum(v[src] * v[tgt]) / (v @ v)
            out[i, j] = zz[i, j] + xy
    return out


def exact_fidelity_susceptibility(family: HamiltonianFamily, gamma, eps: float = 1e-3,
                                  gap_tol: float = 1e-8, min_overlap: float = 0.5) -> np.ndarray:
    """``-d^2 ln F / d eps_i d eps_j`` from exact ground-state overlaps by central differences."""
    g0 = np.ravel(np.asarray(gamma, dtype=float))
    nc = len(g0)
    sols = {}

    def state(shift):
        key = tuple(np.round(shift, 12))
        if key not in sols:
            sol = exact_diagonalize(family, g0 + np.asarray(shift), k=2)
            if len(sol.energies) > 1 and sol.energies[1] - sol.energies[0] < gap_tol:
                raise LevelCrossingError(f"gap below {gap_tol} at gamma={g0 + np.asarray(shift)}")
            sols[key] = sol.vector / np.linalg.norm(sol.vector)
        return sols[key]

    psi0 = state(np.zeros(nc))

    def lnF(shift):
        ov = abs(psi0 @ state(shift))
        if ov < min_overlap:
            raise LevelCrossingError(f"overlap {ov:.3g} inside the stencil at shift {shift}")
        return np.log(ov)

    chi = np.zeros((nc, nc))
    e = np.eye(nc) * eps
    for i in range(nc):
        chi[i, i] = -(lnF(e[i]) + lnF(-e[i])) / eps**2
        for j in range(i + 1, nc):
            mixed = lnF(e[i] + e[j]) - lnF(e[i] - e[j]) - lnF(-e[i] + e[j]) + lnF(-e[i] - e[j])
            chi[i, j] = chi[j, i] = -mixed / (4 * eps**2)
    return chi


# --------------------------------------------------------------------------- #
# Disk cache
# --------------------------------------------------------------------------- #


def cache_dir() -> Path:
    return Path(os.environ.get("FNQS_CACHE", Path.home() / ".cache" / "fnqs"))


def cached(kind: str, family: HamiltonianFamily, gamma, compute, **extra):
    """Memoize an oracle result on disk, keyed by family, lattice and coupling hash."""
    g = np.ravel(np.asarray(gamma, dtype=float))
    key = json.dumps({"kind": kind, "family": family.to_dict(), "gamma": g.tolist(), **extra},
                     sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:24]
    path = cache_dir() / "oracle" / f"{kind}-{digest}.npy"
    if path.exists():
        return np.load(path)
    value = np.asarray(compute())
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}.npy")
    np.save(tmp, value)
    os.replace(tmp, path)
    return value
