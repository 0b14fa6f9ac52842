"""Fidelity susceptibility from coupling derivatives of the log-amplitude.

With ``D_i = d log psi / d gamma_i`` sampled from ``|psi(. | gamma)|^2``,

    chi_ij = Re( <D_i^* D_j> - <D_i>^* <D_j> ),

the coupling-space block of the quantum geometric tensor. The module also finds
leading eigen-directions, fits finite-size data collapses and writes the
vector-field table of a two-coupling sweep.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .observables import _groups
from .sampler import SamplerConfig, run_chains


@dataclass(frozen=True)
class ChiEstimate:
    matrix: np.ndarray  # (N_c, N_c)
    error: np.ndarray  # (N_c, N_c), jackknife over chains/blocks


@dataclass(frozen=True)
class LeadingDirection:
    value: float
    vector: np.ndarray
    degenerate: bool


@dataclass(frozen=True)
class CollapseFit:
    h_c: float
    nu: float
    quality: float
    landscape: np.ndarray  # (len(h_c grid), len(nu grid))


def chi_from_jacobian(D, n_chains: int = 1) -> ChiEstimate:
    """``chi`` and its error from coupling-Jacobian rows ``D`` (M, N_c)."""
    D = np.asarray(D)
    if D.ndim != 2 or len(D) < 2:
        raise ValueError("need a (M, N_c) array of coupling derivatives with M >= 2")
    Dc = D - D.mean(axis=0)
    chi = (Dc.conj().T @ Dc).real / len(D)
    chi = 0.5 * (chi + chi.T)
    # jackknife on the raw moments
    outer = (D.conj()[:, :, None] * D[:, None, :]).real
    g_outer = _groups(outer, n_chains)
    g_mean = _groups(D, n_chains)
    G = len(g_outer)
    err = np.full(chi.shape, np.nan)
    if G >= 2:
        to, tm = g_outer.sum(0), g_mean.sum(0)
        loo = []
        for i in range(G):
            mo = (to - g_outer[i]) / (G - 1)
            mm = (tm - g_mean[i]) / (G - 1)
            loo.append(mo - np.outer(mm.conj(), mm).real)
        loo = np.array(loo)
        err = np.sqrt((G - 1) / G * np.sum((loo - loo.mean(0)) ** 2, axis=0))
    return ChiEstimate(chi, err)


def chi(psi, gamma, samples, n_chains: int = 1) -> ChiEstimate:
    """Fidelity susceptibility of ``psi(. | gamma)`` from samples of that state."""
    s = np.asarray(samples)
    g = np.repeat(np.atleast_2d(np.asarray(gamma, dtype=float)), len(s), axis=0)
    _, _, D = psi.jacobians(s, g, params=False, couplings=True)
    if D is None:
        raise ValueError("the wavefunction does not provide coupling derivatives")
    return chi_from_jacobian(D, n_chains)


def chi_sweep(psi, family, gammas, sampler_config: SamplerConfig) -> list[ChiEstimate]:
    """``chi`` on every coupling vector of ``gammas``, sampling them as one ensemble."""
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    batch, _ = run_chains(psi.log_psi, family, gammas, sampler_config)
    C = sampler_config.chains_per_system
    return [chi(psi, g, batch.samples[k], C) for k, g in enumerate(gammas)]


def chi_enumerated(psi, family, gamma, chunk: int = 8192) -> np.ndarray:
    """Exact ``chi`` of the model state by summing over the whole sector (small N only)."""
    from .observables import enumerate_state

    _, configs, amp = enumerate_state(psi, family, gamma, chunk)
    p = np.abs(amp) ** 2
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    D = np.concatenate([
        psi.jacobians(configs[a : a + chunk], np.repeat(g, len(configs[a : a + chunk]), axis=0),
                      params=False, couplings=True)[2]
        for a in range(0, len(configs), chunk)
    ])
    m = p @ D
    chi = (D.conj().T @ (p[:, None] * D) - np.outer(m.conj(), m)).real
    return 0.5 * (chi + chi.T)


def leading_direction(chi_matrix, rtol: float = 1e-8) -> LeadingDirection:
    """Largest eigenpair; the eigenvector's first nonzero component is made positive.

    When the two largest eigenvalues differ by less than ``rtol`` times the
    largest, the direction is not meaningful: ``degenerate`` is set and the
    returned vector is the first coordinate axis.
    """
    A = np.asarray(chi_matrix, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("chi has non-finite entries")
    if A.shape[0] != A.shape[1]:
        raise ValueError("chi must be square")
    w, v = np.linalg.eigh(0.5 * (A + A.T))
    lam = float(w[-1])
    if len(w) > 1 and abs(w[-1] - w[-2]) <= rtol * max(abs(lam), np.finfo(float).tiny):
        e = np.zeros(len(w))
        e[0] = 1.0
        return LeadingDirection(lam, e, True)
    vec = v[:, -1]
    nz = np.nonzero(np.abs(vec) > 1e-14)[0]
    if len(nz) and vec[nz[0]] < 0:
        vec = -vec
    return LeadingDirection(lam, vec, False)


# --------------------------------------------------------------------------- #
# Finite-size data collapse
# --------------------------------------------------------------------------- #


def _window(h, y, frac):
    keep = y >= frac * y.max()
    return h[keep], y[keep]


def collapse_cost(curves: dict, h_c: float, nu: float, window: float = 0.5) -> float:
    """Scatter between rescaled curves ``(h - h_c) N^{1/nu}`` vs ``log(chi N^{-2/nu})``.

    Each curve is restricted to points with ``chi >= window * max(chi)``. For
    every ordered pair of sizes the points of one curve are compared with the
    linear interpolation of the other inside their common range.
    """
    scaled = []
    for N, (h, y) in curves.items():
        hw, yw = _window(h, y, window)
        x = (hw - h_c) * N ** (1.0 / nu)
        order = np.argsort(x)
        scaled.append((x[order], np.log(yw[order]) - (2.0 / nu) * np.log(N)))
    total, count = 0.0, 0
    for a, (xa, ya) in enumerate(scaled):
        for b, (xb, yb) in enumerate(scaled):
            if a == b or len(xb) < 2:
                continue
            inside = (xa >= xb[0]) & (xa <= xb[-1])
            if not np.any(inside):
                continue
            total += np.sum((ya[inside] - np.interp(xa[inside], xb, yb)) ** 2)
            count += int(inside.sum())
    return total / count if count else np.inf


def collapse_fit(curves: dict, h_c_grid, nu_grid, window: float = 0.5) -> CollapseFit:
    """Grid search for the best collapse of ``{N: (h, chi)}``.

    Requires at least two sizes. The result does not depend on the order of
    ``curves``.
    """
    if len(curves) < 2:
        raise ValueError("a collapse needs at least two system sizes")
    clean = {}
    for N, (h, y) in sorted(curves.items()):
        h = np.asarray(h, dtype=float)
        y = np.asarray(y, dtype=float)
        if h.shape != y.shape or len(h) < 3:
            raise ValueError(f"curve for N={N} needs matching h and chi arrays of length >= 3")
        if np.any(y <= 0) or np.ptp(y) <= 1e-12 * abs(y).max():
            raise ValueError(f"curve for N={N} is degenerate (constant or non-positive chi)")
        clean[int(N)] = (h, y)
    hg = np.asarray(h_c_grid, dtype=float)
    ng = np.asarray(nu_grid, dtype=float)
    land = np.array([[collapse_cost(clean, hc, nu, window) for nu in ng] for hc in hg])
    i, j = np.unravel_index(np.argmin(land), land.shape)
    return CollapseFit(float(hg[i]), float(ng[j]), float(land[i, j]), land)


# --------------------------------------------------------------------------- #
# Vector-field table
# --------------------------------------------------------------------------- #

FIELD_COLUMNS = ("gamma_1", "gamma_2", "lambda_max", "v_1", "v_2", "sigma_stat", "degenerate")


def vector_field_rows(gammas, estimates: list[ChiEstimate], clip=None) -> list[dict]:
    """One row per grid point of a two-coupling sweep.

    ``clip=(lo, hi)`` limits the displayed ``lambda_max``; stored estimates are
    never modified.
    """
    rows = []
    for g, est in zip(np.atleast_2d(gammas), estimates):
        if len(g) != 2:
            raise ValueError("vector-field tables need exactly two couplings")
        lead = leading_direction(est.matrix)
        # error of the leading eigenvalue by first-order perturbation
        v = lead.vector
        sig = float(np.sqrt(np.sum((np.outer(v, v) * est.error) ** 2)))
        lam = lead.value if clip is None else float(np.clip(lead.value, *clip))
        rows.append({"gamma_1": float(g[0]), "gamma_2": float(g[1]), "lambda_max": lam,
                     "v_1": float(v[0]), "v_2": float(v[1]), "sigma_stat": sig,
                     "degenerate": int(lead.degenerate)})
    return rows


def write_table(path, rows: list[dict], columns=FIELD_COLUMNS) -> Path:
    """Tab-separated table with a header line, written atomically."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), delimiter="\t")
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in columns})
    tmp.replace(path)
    return path
