"""Monte Carlo estimators for correlations, order parameters and the V-score.

Observables are quoted for spin-1/2 operators ``S = sigma / 2`` whatever the
Hamiltonian convention. Samples come in the order produced by
:func:`fnqs.sampler.run_chains`: row ``t * C + c`` is the ``t``-th kept sample
of chain ``c``. Error bars are one standard error from chain-wise means; with a
single chain the series is cut into contiguous blocks instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonians import HamiltonianFamily, local_energies
from .lattice import LatticeGeometry

N_BLOCKS = 16


@dataclass(frozen=True)
class Estimate:
    mean: float
    error: float

    def __iter__(self):
        yield self.mean
        yield self.error


def _groups(values: np.ndarray, n_chains: int) -> np.ndarray:
    """Means per chain (or per block for a single chain) along axis 0."""
    v = np.asarray(values)
    M = len(v)
    if n_chains > 1 and M % n_chains == 0:
        return v.reshape(M // n_chains, n_chains, *v.shape[1:]).mean(axis=0)
    nb = min(N_BLOCKS, M)
    usable = (M // nb) * nb
    return v[:usable].reshape(nb, usable // nb, *v.shape[1:]).mean(axis=1)


def mean_error(values, n_chains: int = 1) -> Estimate:
    v = np.asarray(values)
    if v.size == 0:
        raise ValueError("no samples")
    g = _groups(v, n_chains)
    err = float(np.std(g, ddof=1) / np.sqrt(len(g))) if len(g) > 1 else float("nan")
    return Estimate(float(np.mean(v)), err)


def jackknife(stat, values, n_chains: int = 1) -> Estimate:
    """Jackknife over chains/blocks for a nonlinear function of sample means.

    ``stat`` maps an array of group means (shape (G, ...)) reduced by
    ``mean(axis=0)`` to a float.
    """
    g = _groups(np.asarray(values), n_chains)
    G = len(g)
    full = stat(g.mean(axis=0))
    if G < 2:
        return Estimate(float(full), float("nan"))
    total = g.sum(axis=0)
    loo = np.array([stat((total - g[i]) / (G - 1)) for i in range(G)])
    err = np.sqrt((G - 1) / G * np.sum((loo - loo.mean()) ** 2))
    return Estimate(float(full), float(err))


# --------------------------------------------------------------------------- #
# Diagonal correlators
# --------------------------------------------------------------------------- #


def zz_long_range_m2(samples, n_chains: int = 1) -> Estimate:
    """``(1/N) sum_i <S^z_i S^z_{i+N/2}>`` on a chain."""
    s = np.asarray(samples, dtype=float)
    N = s.shape[1]
    if N % 2:
        raise ValueError("long-range correlation needs an even chain length")
    vals = 0.25 * np.mean(s * np.roll(s, -N // 2, axis=1), axis=1)
    return mean_error(vals, n_chains)


def zz_correlation_profile(samples) -> np.ndarray:
    """``C(r) = (1/N) sum_i <S^z_i S^z_{i+r}>`` for r = 0..N-1 on a chain (no errors)."""
    s = np.asarray(samples, dtype=float)
    N = s.shape[1]
    return np.array([0.25 * np.mean(s * np.roll(s, -r, axis=1)) for r in range(N)])


def magnetization_squared(samples, n_chains: int = 1) -> Estimate:
    """``(1/N^2) <(sum_i S^z_i)^2> = (1/N) sum_r C(r)``."""
    s = np.asarray(samples, dtype=float)
    N = s.shape[1]
    return mean_error(0.25 * s.sum(axis=1) ** 2 / N**2, n_chains)


# --------------------------------------------------------------------------- #
# Isotropic spin correlations and structure factors
# --------------------------------------------------------------------------- #


def spin_correlation_samples(log_psi_fn, gamma, samples) -> np.ndarray:
    """Per-sample local estimators of ``<S_i . S_j>``, shape (M, N, N).

    The ``zz`` part is diagonal; the ``xy`` part ``(S^+_i S^-_j + h.c.)/2``
    contributes ``psi(sigma with i, j exchanged) / (2 psi(sigma))`` for
    antiparallel pairs. The diagonal ``S_i . S_i = 3/4`` is exact.
    """
    s = np.asarray(samples)
    M, N = s.shape
    sf = s.astype(float)
    out = 0.25 * sf[:, :, None] * sf[:, None, :]
    iu, ju = np.triu_indices(N, k=1)
    anti = s[:, iu] != s[:, ju]
    rows, pair = np.nonzero(anti)
    if len(rows):
        conf = s[rows].copy()
        a, b = iu[pair], ju[pair]
        conf[np.arange(len(rows)), a] = s[rows, b]
        conf[np.arange(len(rows)), b] = s[rows, a]
        g = np.repeat(np.atleast_2d(gamma), len(rows), axis=0)
        lp_conf = np.asarray(log_psi_fn(conf, g))
        lp0 = np.asarray(log_psi_fn(s, np.repeat(np.atleast_2d(gamma), M, axis=0)))
        ratio = np.exp(lp_conf - lp0[rows]).real
        xy = np.zeros((M, len(iu)))
        xy[rows, pair] = 0.5 * ratio
        out[:, iu, ju] += xy
        out[:, ju, iu] += xy
    out[:, np.arange(N), np.arange(N)] = 0.75
    return out


def _phases(lattice: LatticeGeometry, k) -> np.ndarray:
    k = lattice.check_momentum(k)
    return np.exp(1j * lattice.coords() @ k)


def structure_factor_samples(corr: np.ndarray, lattice: LatticeGeometry, k) -> np.ndarray:
    """Per-sample ``C(k) = (1/N) sum_ij e^{ik.(r_j - r_i)} c_ij``; equals ``sum_r e^{ikr} <S_0.S_r>``."""
    ph = _phases(lattice, k)
    N = lattice.n_sites
    return np.einsum("i,mij,j->m", ph.conj(), corr, ph).real / N


def structure_factor(corr, lattice, k, n_chains: int = 1) -> Estimate:
    return mean_error(structure_factor_samples(corr, lattice, k), n_chains)


def neel_m2(corr, lattice: LatticeGeometry, n_chains: int = 1) -> Estimate:
    """``C(pi, pi) / N`` on the square lattice."""
    N = lattice.n_sites
    v = structure_factor_samples(corr, lattice, (np.pi, np.pi)) / N
    return mean_error(v, n_chains)


def stripe_m2(corr, lattice: LatticeGeometry, n_chains: int = 1) -> Estimate:
    """``[C(0, pi) + C(pi, 0)] / (2N)`` on the square lattice."""
    N = lattice.n_sites
    v = (structure_factor_samples(corr, lattice, (0.0, np.pi))
         + structure_factor_samples(corr, lattice, (np.pi, 0.0))) / (2 * N)
    return mean_error(v, n_chains)


# --------------------------------------------------------------------------- #
# Dimer order
# --------------------------------------------------------------------------- #


def dimer_order_d2(samples, lattice: LatticeGeometry, n_chains: int = 1) -> Estimate:
    """``[D_x(pi, 0) + D_y(0, pi)] / (2N)`` from z-only bond correlators.

    With bond variables ``b^a_i = S^z_i S^z_{i+a}``,
    ``D_a(k) = (9/N) (<|B_a(k)|^2> - |<B_a(k)>|^2)`` where
    ``B_a(k) = sum_j e^{ik.r_j} b^a_j``. The factor 9 matches the isotropic
    normalization of the dimer operator.
    """
    if lattice.kind != "square":
        raise ValueError("dimer order is defined on the square lattice")
    s = np.asarray(samples, dtype=float)
    N = lattice.n_sites
    coords = lattice.coords()
    terms = []
    for off, k in (((1, 0), (np.pi, 0.0)), ((0, 1), (0.0, np.pi))):
        j = np.array([lattice.site(c + np.asarray(off)) for c in coords])
        bond = 0.25 * s * s[:, j]
        ph = np.exp(1j * coords @ np.asarray(k))
        terms.append(bond @ ph)  # B_a(k) per sample
    Bx, By = terms
    feats = np.stack([np.abs(Bx) ** 2, Bx.real, Bx.imag, np.abs(By) ** 2, By.real, By.imag], axis=1)

    def stat(m):
        dx = m[0] - m[1] ** 2 - m[2] ** 2
        dy = m[3] - m[4] ** 2 - m[5] ** 2
        return 9.0 / N * (dx + dy) / (2 * N)

    return jackknife(stat, feats, n_chains)


# --------------------------------------------------------------------------- #
# Energies and the V-score
# --------------------------------------------------------------------------- #


def energy(e_loc, n_chains: int = 1) -> Estimate:
    return mean_error(np.asarray(e_loc).real, n_chains)


def v_score(e_loc, n_sites: int, n_chains: int = 1) -> Estimate:
    """``N (<|E_L|^2> - |<E_L>|^2) / <E_L>^2``.

    For Hermitian ``H``, ``E[|E_L|^2]`` is the sampled estimate of
    ``<H^dagger H> = <H^2>``.
    """
    e = np.asarray(e_loc)
    feats = np.stack([np.abs(e) ** 2, e.real, e.imag], axis=1)
    mean_e = feats[:, 1].mean()
    if mean_e == 0:
        raise ZeroDivisionError("V-score is undefined for zero mean energy")

    def stat(m):
        return n_sites * (m[0] - m[1] ** 2 - m[2] ** 2) / m[1] ** 2

    return jackknife(stat, feats, n_chains)


# --------------------------------------------------------------------------- #
# Disorder averages and exponent fits
# --------------------------------------------------------------------------- #


def disorder_average(per_realization) -> tuple[np.ndarray, np.ndarray]:
    """Uniform average over realizations (axis 0) and its standard error."""
    a = np.asarray(per_realization, dtype=float)
    if len(a) == 0:
        raise ValueError("empty realization set")
    err = a.std(axis=0, ddof=1) / np.sqrt(len(a)) if len(a) > 1 else np.full(a.shape[1:], np.nan)
    return a.mean(axis=0), err


def fit_decay_exponent(C, r_min: int = 1, r_max: int | None = None, chord: bool = False):
    """Exponent ``eta`` of ``C(r) ~ r^{-eta}`` from a log-log least-squares fit.

    ``C`` is indexed by distance on a periodic chain of ``len(C)`` sites; the
    fit uses ``r_min <= r <= r_max`` (default ``N/2``). With ``chord=True`` the
    distance is the chord length ``(N/pi) sin(pi r/N)``. Returns
    ``(eta, standard error)``.
    """
    C = np.asarray(C, dtype=float)
    N = len(C)
    r_max = N // 2 if r_max is None else r_max
    r = np.arange(r_min, r_max + 1)
    if len(r) < 2:
        raise ValueError("need at least two distances to fit")
    y = C[r]
    if np.any(y <= 0):
        raise ValueError("correlations must be positive for a log-log fit")
    x = (N / np.pi) * np.sin(np.pi * r / N) if chord else r.astype(float)
    A = np.column_stack([np.log(x), np.ones(len(x))])
    coef, res, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    dof = max(len(x) - 2, 1)
    resid = np.log(y) - A @ coef
    cov = np.linalg.inv(A.T @ A) * (resid @ resid) / dof
    return float(-coef[0]), float(np.sqrt(cov[0, 0]))


# --------------------------------------------------------------------------- #
# Exact enumeration of a variational state
# --------------------------------------------------------------------------- #


def enumerate_state(psi, family: HamiltonianFamily, gamma, chunk: int = 8192):
    """Normalized amplitudes of ``psi(. | gamma)`` on the family's full sector.

    Returns ``(basis, configs, amplitudes)`` where ``basis`` holds the integer
    bit patterns used by :mod:`fnqs.exact` (bit set means spin down).
    """
    from .exact import sector_basis

    N = family.n_sites
    if N > 20:
        raise ValueError("enumeration is limited to N <= 20")
    basis = sector_basis(N, family.conserves_magnetization)
    configs = (1 - 2 * ((basis[:, None] >> np.arange(N)[None, :]) & 1)).astype(np.int8)
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    lp = np.concatenate([
        psi.log_psi(configs[a : a + chunk], np.repeat(g, len(configs[a : a + chunk]), axis=0))
        for a in range(0, len(configs), chunk)
    ])
    lp = lp - lp.real.max()
    amp = np.exp(lp)
    amp /= np.linalg.norm(amp)
    return basis, configs, amp


def exact_variational_energy(psi, family: HamiltonianFamily, gamma) -> float:
    """``<psi|H|psi> / <psi|psi>`` by full enumeration (no sampling noise)."""
    from .exact import sparse_hamiltonian

    basis, _, amp = enumerate_state(psi, family, gamma)
    H, _ = sparse_hamiltonian(family, gamma, basis)
    return float(np.vdot(amp, H @ amp).real)


def sampled_energies(psi, family, gamma, samples) -> np.ndarray:
    g = np.repeat(np.atleast_2d(gamma), len(samples), axis=0)
    return local_energies(family, g, samples, psi.log_psi)
