"""Cross-checks between the independent exact solvers."""

from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import eigsh

from . import exact
from .hamiltonians import (J1J2Heisenberg, RandomTransverseFieldIsing, TransverseFieldIsing,
                           dense_matrix)
from .lattice import LatticeGeometry

TOL = 1e-9


def _check(name, ok, detail):
    return {"name": name, "ok": bool(ok), "detail": detail}


def oracle_checks() -> list[dict]:
    out = []
    rng = np.random.default_rng(7)

    # free fermions vs dense matrices built from the sparse-row interface
    for h in (0.5, 1.0, 1.5):
        fam = TransverseFieldIsing(LatticeGeometry.chain(8))
        ff = exact.ground_energy(fam, [h])
        dense = np.linalg.eigvalsh(dense_matrix(fam, [h]))[0]
        out.append(_check(f"tfi N=8 h={h}: free fermions vs dense", abs(ff - dense) < TOL,
                          f"|dE|={abs(ff - dense):.2e}"))
    fam = RandomTransverseFieldIsing(LatticeGeometry.chain(8))
    fields = rng.uniform(0, 1, 8)
    h, J = exact.tfi_fields(fam, fields)
    sol = exact.solve_tfi_chain(h, J)
    ed = exact.exact_diagonalize(fam, fields, method="dense")
    dz = np.max(np.abs(sol.zz_matrix() - exact.zz_correlations(ed)))
    out.append(_check("random tfi N=8: energies", abs(sol.energy - ed.energy) < TOL,
                      f"|dE|={abs(sol.energy - ed.energy):.2e}"))
    out.append(_check("random tfi N=8: Wick correlators vs dense", dz < TOL, f"max|dC|={dz:.2e}"))

    # Lanczos vs dense (TFI N=12) and vs ARPACK (Heisenberg 4x4)
    fam = TransverseFieldIsing(LatticeGeometry.chain(12))
    lz = exact.exact_diagonalize(fam, [0.7], method="lanczos")
    dn = exact.exact_diagonalize(fam, [0.7], method="dense")
    out.append(_check("tfi N=12: Lanczos vs dense", abs(lz.energy - dn.energy) < TOL,
                      f"|dE|={abs(lz.energy - dn.energy):.2e}, residual={lz.residual:.1e}"))
    fam = J1J2Heisenberg(LatticeGeometry.square(4))
    lz = exact.exact_diagonalize(fam, [0.3], method="lanczos")
    H, _ = exact.sparse_hamiltonian(fam, [0.3])
    ar = eigsh(H, k=1, which="SA", tol=1e-13)[0][0]
    out.append(_check("j1j2 4x4: Lanczos vs ARPACK", abs(lz.energy - ar) < TOL,
                      f"|dE|={abs(lz.energy - ar):.2e}, residual={lz.residual:.1e}"))

    # free fermions vs Lanczos at N=16
    fam = TransverseFieldIsing(LatticeGeometry.chain(16))
    ff = exact.ground_energy(fam, [1.0])
    lz = exact.exact_diagonalize(fam, [1.0], method="lanczos")
    out.append(_check("tfi N=16 h=1: free fermions vs Lanczos", abs(ff - lz.energy) < TOL,
                      f"|dE|={abs(ff - lz.energy):.2e}"))
    return out
