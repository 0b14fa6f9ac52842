import numpy as np
import pytest

from fnqs import exact
from fnqs.hamiltonians import (J1J2Heisenberg, RandomTransverseFieldIsing, TransverseFieldIsing,
                               dense_matrix)
from fnqs.lattice import LatticeGeometry
from fnqs.verify import oracle_checks


def chain(n):
    return LatticeGeometry.chain(n)


def test_ferromagnet_energy():
    # Pauli units: E0 = -J N at h = 0
    fam = TransverseFieldIsing(chain(10))
    assert exact.ground_energy(fam, [0.0]) == pytest.approx(-10.0, abs=1e-12)


def test_free_spins_energy(rng):
    h = rng.uniform(0, 2, 9)
    sol = exact.solve_tfi_chain(h, 0.0)
    assert sol.energy == pytest.approx(-h.sum(), abs=1e-12)


@pytest.mark.parametrize("n", [5, 8])
def test_random_fields_vs_dense(n, rng):
    fam = RandomTransverseFieldIsing(chain(n))
    fields = rng.uniform(0, 1, n)
    h, J = exact.tfi_fields(fam, fields)
    sol = exact.solve_tfi_chain(h, J)
    w, v = np.linalg.eigh(dense_matrix(fam, fields))
    assert abs(sol.energy - w[0]) < 1e-10
    ed = exact.exact_diagonalize(fam, fields, method="dense")
    assert np.max(np.abs(sol.zz_matrix() - exact.zz_correlations(ed))) < 1e-9


def test_pfaffian_squares_to_determinant(rng):
    A = rng.normal(size=(6, 6))
    A = A - A.T
    assert exact.pfaffian(A) ** 2 == pytest.approx(np.linalg.det(A), rel=1e-10)


def test_two_site_singlet():
    # single bond: S1.S2 has the singlet at -3/4
    S = np.array([[0.25, 0, 0, 0], [0, -0.25, 0.5, 0], [0, 0.5, -0.25, 0], [0, 0, 0, 0.25]])
    assert np.linalg.eigvalsh(S)[0] == pytest.approx(-0.75)
    # the 2x2 torus counts every bond twice: twice the 4-site ring, E0 = 2 x (-2)
    fam = J1J2Heisenberg(LatticeGeometry.square(2))
    H = dense_matrix(fam, [0.0])
    w = np.linalg.eigvalsh(H)
    assert w[0] == pytest.approx(-4.0, abs=1e-12)


def test_lanczos_matches_dense_tfi12():
    fam = TransverseFieldIsing(chain(12))
    lz = exact.exact_diagonalize(fam, [0.7], method="lanczos")
    dn = exact.exact_diagonalize(fam, [0.7], method="dense")
    assert abs(lz.energy - dn.energy) < 1e-10
    assert lz.residual < 1e-9
    assert abs(np.linalg.norm(lz.vector) - 1) < 1e-12


def test_lanczos_matches_dense_heisenberg_sector():
    # the 2x4 rectangle is not representable; the 2x2 torus in the Sz=0 sector is
    fam = J1J2Heisenberg(LatticeGeometry.square(2))
    lz = exact.exact_diagonalize(fam, [0.3], method="lanczos")
    dn = np.linalg.eigvalsh(dense_matrix(fam, [0.3]))[0]
    assert abs(lz.energy - dn) < 1e-10


@pytest.mark.slow
def test_lanczos_equals_free_fermions_n16():
    fam = TransverseFieldIsing(chain(16))
    lz = exact.exact_diagonalize(fam, [1.0], method="lanczos")
    assert abs(lz.energy - exact.ground_energy(fam, [1.0])) < 1e-9


def test_fidelity_susceptibility_richardson():
    fam = TransverseFieldIsing(chain(8))
    a = exact.exact_fidelity_susceptibility(fam, [0.9], eps=2e-3)[0, 0]
    b = exact.exact_fidelity_susceptibility(fam, [0.9], eps=1e-3)[0, 0]
    assert a > 0 and b > 0
    assert abs(a - b) / b < 0.01


def test_fidelity_susceptibility_perturbative():
    # chi = sum_n |<n|dH|0>|^2 / (E_n - E_0)^2, an independent spectral formula
    fam = TransverseFieldIsing(chain(8))
    h = 0.85
    w, v = np.linalg.eigh(dense_matrix(fam, [h]))
    dH = dense_matrix(fam, [1.0]) - dense_matrix(fam, [0.0])
    m = v.T @ dH @ v[:, 0]
    ref = np.sum(m[1:] ** 2 / (w[1:] - w[0]) ** 2)
    got = exact.exact_fidelity_susceptibility(fam, [h])[0, 0]
    assert got == pytest.approx(ref, rel=1e-4)


def test_fidelity_peak_shifted_below_one():
    fam = TransverseFieldIsing(chain(8))
    hs = np.linspace(0.7, 1.2, 26)
    chi = [exact.exact_fidelity_susceptibility(fam, [h])[0, 0] for h in hs]
    peak = hs[int(np.argmax(chi))]
    assert 0.8 < peak < 1.0


def test_two_coupling_chi_symmetric():
    fam = RandomTransverseFieldIsing(chain(6))
    chi = exact.exact_fidelity_susceptibility(fam, np.full(6, 0.9))
    assert chi.shape == (6, 6)
    assert np.allclose(chi, chi.T, atol=1e-8)
    assert np.linalg.eigvalsh(chi).min() > -1e-6


def test_spin_correlations_total_spin_singlet():
    fam = J1J2Heisenberg(LatticeGeometry.square(4))
    sol = exact.exact_diagonalize(fam, [0.0])
    C = exact.spin_correlations(fam, sol)
    assert np.allclose(np.diag(C), 0.75)
    # a singlet ground state has S_tot^2 = sum_ij <S_i.S_j> = 0
    assert abs(C.sum()) < 1e-8


def test_known_4x4_heisenberg_energy():
    # literature value for the periodic 4x4 antiferromagnet: E0 = -11.228483
    fam = J1J2Heisenberg(LatticeGeometry.square(4))
    e = exact.exact_diagonalize(fam, [0.0]).energy
    assert e == pytest.approx(-11.228483, abs=2e-6)


def test_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("FNQS_CACHE", str(tmp_path))
    fam = TransverseFieldIsing(chain(4))
    calls = []

    def compute():
        calls.append(1)
        return np.arange(3.0)

    a = exact.cached("demo", fam, [1.0], compute)
    b = exact.cached("demo", fam, [1.0], compute)
    assert np.array_equal(a, b) and len(calls) == 1


def test_verify_suite_passes():
    results = oracle_checks()
    failed = [r for r in results if not r["ok"]]
    assert not failed, failed
