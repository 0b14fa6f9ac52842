import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fnqs import fidelity as fid
from fnqs.hamiltonians import TransverseFieldIsing, all_configurations
from fnqs.lattice import LatticeGeometry
from fnqs.sampler import SamplerConfig

from _support import small_vit


def normalized(psi, g, configs):
    lp = psi.log_psi(configs, np.repeat([g], len(configs), 0))
    v = np.exp(lp - lp.real.max())
    return v / np.linalg.norm(v)


def enumerated_chi(psi, g, configs):
    lp, _, D = psi.jacobians(configs, np.repeat([g], len(configs), 0), params=False, couplings=True)
    p = np.abs(np.exp(lp - lp.real.max())) ** 2
    p /= p.sum()
    m = p @ D
    return (np.einsum("m,mi,mj->ij", p, D.conj(), D) - np.outer(m.conj(), m)).real


# --------------------------------------------------------------------------- chi estimator


def test_gamma_independent_state_has_zero_chi(rng):
    psi = small_vit(8, n_couplings=8, embedding="split", symmetric=False)
    th = psi.theta.copy()
    th[psi.segment("embed/W_coupling")] = 0.0
    psi.theta = th
    s = rng.choice(np.array([-1, 1], np.int8), size=(200, 8))
    est = fid.chi(psi, rng.uniform(0.5, 1.5, 8), s)
    assert np.all(est.matrix == 0.0)


def test_chi_matches_fidelity_overlap():
    # 1 - |<psi(g)|psi(g+d)>| = chi d^2 / 2 + O(d^3)
    psi = small_vit(8, seed=4, head_scale=20.0)
    configs = all_configurations(8)
    g, d = 0.9, 1e-4
    chi_enum = enumerated_chi(psi, [g], configs)[0, 0]
    a = normalized(psi, [g - d], configs)
    b = normalized(psi, [g + d], configs)
    fd = 2 * (1 - abs(np.vdot(a, b))) / (2 * d) ** 2
    assert chi_enum > 1e-4
    fam = TransverseFieldIsing(LatticeGeometry.chain(8))
    assert np.allclose(fid.chi_enumerated(psi, fam, [g]), chi_enum, rtol=1e-12, atol=0)
    assert fd == pytest.approx(chi_enum, rel=1e-4)


def test_sampled_chi_matches_enumeration():
    psi = small_vit(8, seed=4, head_scale=20.0)
    fam = TransverseFieldIsing(LatticeGeometry.chain(8))
    ref = enumerated_chi(psi, [0.9], all_configurations(8))[0, 0]
    cfg = SamplerConfig(n_samples=40_000, chains_per_system=200, burn_in=30, seed=5)
    (est,) = fid.chi_sweep(psi, fam, [[0.9]], cfg)
    assert abs(est.matrix[0, 0] - ref) < 3 * est.error[0, 0]


def test_two_couplings_symmetric(rng):
    psi = small_vit(4, kind="square", n_couplings=2, seed=3, head_scale=5.0, sign_rule="marshall")
    s = np.array([x for x in all_configurations(16)[::97]])
    est = fid.chi(psi, [0.3, 0.1], s)
    assert est.matrix.shape == (2, 2)
    assert np.array_equal(est.matrix, est.matrix.T)
    assert np.linalg.eigvalsh(est.matrix).min() >= -1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 60), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_chi_psd_for_any_rows(M, nc, seed):
    r = np.random.default_rng(seed)
    D = r.normal(size=(M, nc)) + 1j * r.normal(size=(M, nc))
    A = fid.chi_from_jacobian(D).matrix
    assert np.array_equal(A, A.T)
    assert np.linalg.eigvalsh(A).min() >= -1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_chi_permutation_and_reparameterization(seed, a):
    r = np.random.default_rng(seed)
    D = r.normal(size=(64, 2)) + 1j * r.normal(size=(64, 2))
    A = fid.chi_from_jacobian(D).matrix
    assert np.allclose(fid.chi_from_jacobian(D[r.permutation(64)]).matrix, A, rtol=1e-12, atol=1e-14)
    # gamma' = a gamma: d/dgamma' = (1/a) d/dgamma, so chi' = chi / a^2
    assert np.allclose(fid.chi_from_jacobian(D / a).matrix, A / a**2, rtol=1e-10, atol=1e-14)


def test_chi_input_validation():
    with pytest.raises(ValueError):
        fid.chi_from_jacobian(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        fid.chi_from_jacobian(np.zeros(5))


# --------------------------------------------------------------------------- leading direction


def test_leading_direction_diagonal():
    lead = fid.leading_direction(np.diag([2.0, 1.0]))
    assert lead.value == 2.0 and np.allclose(lead.vector, [1, 0]) and not lead.degenerate


def test_leading_direction_isotropic_is_degenerate():
    lead = fid.leading_direction(np.eye(2))
    assert lead.degenerate and lead.value == 1.0


def test_leading_direction_closed_form():
    a, b, c = 1.0, 0.4, 0.3
    lam = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b**2)
    lead = fid.leading_direction([[a, b], [b, c]])
    assert lead.value == pytest.approx(lam, rel=1e-14)
    v = np.array([b, lam - a])
    assert np.allclose(lead.vector, v / np.linalg.norm(v), atol=1e-14)


def test_leading_direction_rejects_nan():
    with pytest.raises(ValueError):
        fid.leading_direction([[1.0, np.nan], [np.nan, 1.0]])


# --------------------------------------------------------------------------- collapse


def synthetic_curves(h_c=1.0, nu=1.0, sizes=(8, 12, 16)):
    h = np.linspace(0.6, 1.4, 41)
    f = lambda x: 1.0 / (1.0 + x**2)
    return {N: (h, N ** (2 / nu) * f((h - h_c) * N ** (1 / nu))) for N in sizes}


def test_collapse_recovers_synthetic_exponents():
    fit = fid.collapse_fit(synthetic_curves(1.0, 1.0), np.linspace(0.9, 1.1, 21), np.linspace(0.6, 1.6, 21))
    assert fit.h_c == pytest.approx(1.0, abs=1e-9)
    assert fit.nu == pytest.approx(1.0, abs=1e-9)
    assert fit.quality < 1e-3


def test_collapse_independent_of_curve_order():
    c = synthetic_curves(1.02, 0.9)
    rev = dict(reversed(list(c.items())))
    grids = (np.linspace(0.9, 1.1, 11), np.linspace(0.6, 1.6, 11))
    a, b = fid.collapse_fit(c, *grids), fid.collapse_fit(rev, *grids)
    assert (a.h_c, a.nu) == (b.h_c, b.nu)
    assert np.array_equal(a.landscape, b.landscape)


def test_collapse_errors():
    h = np.linspace(0.6, 1.4, 5)
    with pytest.raises(ValueError, match="two system sizes"):
        fid.collapse_fit({8: (h, h)}, [1.0], [1.0])
    with pytest.raises(ValueError, match="degenerate"):
        fid.collapse_fit({8: (h, np.ones(5)), 12: (h, h)}, [1.0], [1.0])
    with pytest.raises(ValueError, match="length"):
        fid.collapse_fit({8: (h[:2], h[:2]), 12: (h, h)}, [1.0], [1.0])


# --------------------------------------------------------------------------- vector field


def test_vector_field_clip_leaves_estimates_alone(tmp_path):
    est = [fid.ChiEstimate(np.diag([5.0, 1.0]), np.full((2, 2), 0.1)),
           fid.ChiEstimate(np.eye(2), np.zeros((2, 2)))]
    rows = fid.vector_field_rows([[0.0, 0.1], [0.2, 0.3]], est, clip=(0.0, 2.0))
    assert rows[0]["lambda_max"] == 2.0 and est[0].matrix[0, 0] == 5.0
    assert rows[0]["sigma_stat"] == pytest.approx(0.1)
    assert rows[1]["degenerate"] == 1
    path = fid.write_table(tmp_path / "field.tsv", rows)
    with open(path) as f:
        back = list(csv.DictReader(f, delimiter="\t"))
    assert list(back[0]) == list(fid.FIELD_COLUMNS)
    assert float(back[0]["v_1"]) == 1.0


def test_vector_field_needs_two_couplings():
    with pytest.raises(ValueError):
        fid.vector_field_rows([[0.1]], [fid.ChiEstimate(np.eye(1), np.zeros((1, 1)))])
