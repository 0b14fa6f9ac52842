import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fnqs import exact
from fnqs.hamiltonians import TransverseFieldIsing, all_configurations, local_energies
from fnqs.lattice import LatticeGeometry
from fnqs.observables import exact_variational_energy
from fnqs.sampler import SamplerConfig
from fnqs.sr import (DivergenceError, RunRecord, SRConfig, SRSolveError, estimate_gradient,
                     estimate_qgt, optimize, sr_factors, sr_step, sr_step_kernel, sr_update)

from _support import ground_state_table, small_vit


def rows(rng, R, m, P):
    return rng.normal(size=(R, m, P)) + 1j * rng.normal(size=(R, m, P))


# --------------------------------------------------------------------------- gradient


def test_zero_variance_on_eigenstates(rng):
    fam = TransverseFieldIsing(LatticeGeometry.chain(8))
    gam = np.array([[0.8], [1.0], [1.2]])
    psi = ground_state_table(fam, gam)
    s = rng.choice(np.array([-1, 1], np.int8), size=(3, 200, 8))
    e = np.stack([local_energies(fam, np.repeat(g[None], 200, 0), s[k], psi.log_psi)
                  for k, g in enumerate(gam)])
    G = estimate_gradient(e, rows(rng, 3, 200, 5))
    assert np.linalg.norm(G.total) < 1e-10


def test_gradient_matches_enumerated_finite_differences():
    fam = TransverseFieldIsing(LatticeGeometry.chain(4))
    psi = small_vit(4, seed=2, head_scale=50.0, patch=2)
    g = [0.9]
    configs = all_configurations(4)
    lp, O, _ = psi.jacobians(configs, np.repeat([g], 16, 0), couplings=False)
    w = np.abs(np.exp(lp - lp.real.max())) ** 2
    e = local_energies(fam, np.repeat([g], 16, 0), configs, psi.log_psi)
    G = estimate_gradient(e[None], O[None], weights=w[None]).total
    rng = np.random.default_rng(0)
    h = 1e-5
    for a in rng.choice(psi.n_params, 12, replace=False):
        plus, minus = psi.copy(), psi.copy()
        plus.theta[a] += h
        minus.theta[a] -= h
        fd = (exact_variational_energy(plus, fam, g) - exact_variational_energy(minus, fam, g)) / (2 * h)
        assert abs(G[a] - fd) <= 1e-6 * max(1.0, abs(fd)), (a, G[a], fd)


def test_identical_systems_average(rng):
    e = rng.normal(size=(1, 40)) + 0j
    O = rows(rng, 1, 40, 4)
    one = estimate_gradient(e, O).total
    two = estimate_gradient(np.concatenate([e, e]), np.concatenate([O, O])).total
    assert np.allclose(one, two, atol=1e-14)


def test_non_finite_energy_names_sample(rng):
    e = rng.normal(size=(2, 5)).astype(complex)
    e[1, 3] = np.nan
    with pytest.raises(FloatingPointError, match=r"\[1, 3\]"):
        estimate_gradient(e, rows(rng, 2, 5, 3))


# --------------------------------------------------------------------------- QGT


def test_constant_rows_give_zero_qgt(rng):
    O = np.repeat(rows(rng, 2, 1, 4), 30, axis=1)
    assert np.allclose(estimate_qgt(O).matrix, 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(2, 30), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_qgt_psd_and_symmetric(R, m, P, seed):
    O = rows(np.random.default_rng(seed), R, m, P)
    S = estimate_qgt(O).matrix
    assert np.array_equal(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-10


def test_factor_form_matches_direct(rng):
    O = rows(rng, 1, 50, 3)
    e = rng.normal(size=(1, 50)) + 1j * rng.normal(size=(1, 50))
    Y, eps = sr_factors(e, O)
    assert np.allclose(Y.T @ Y, estimate_qgt(O).matrix, atol=1e-12, rtol=0)
    assert np.allclose(2 * Y.T @ eps, estimate_gradient(e, O).total, atol=1e-12, rtol=0)


def test_qgt_is_average_of_systems(rng):
    O = rows(rng, 3, 20, 4)
    per = [estimate_qgt(O[k : k + 1]).matrix for k in range(3)]
    assert np.allclose(estimate_qgt(O).matrix, np.mean(per, axis=0), atol=1e-14)


def test_rank_deficiency_reported(rng):
    O = rows(rng, 1, 3, 10)  # three samples cannot span ten directions
    est = estimate_qgt(O)
    assert est.rank <= 4 and est.rank_deficient


# --------------------------------------------------------------------------- solver


def test_zero_gradient_zero_step():
    cfg = SRConfig(learning_rate=0.1, diag_shift=1e-3)
    assert np.all(sr_step(np.eye(3), np.zeros(3), cfg) == 0)


def test_pure_shift():
    cfg = SRConfig(learning_rate=0.1, diag_shift=1e-2)
    G = np.array([1.0, -2.0, 0.5])
    assert np.allclose(sr_step(np.zeros((3, 3)), G, cfg), -(0.1 / 1e-2) * G, rtol=1e-12)


def test_random_spd_against_dense_solve(rng):
    A = rng.normal(size=(3, 3))
    S = A @ A.T
    G = rng.normal(size=3)
    cfg = SRConfig(learning_rate=0.05, diag_shift=1e-3)
    ref = -0.05 * np.linalg.solve(S + 1e-3 * np.eye(3), G)
    d = sr_step(S, G, cfg)
    assert np.allclose(d, ref, atol=1e-10, rtol=0)
    resid = np.linalg.norm((S + 1e-3 * np.eye(3)) @ d + 0.05 * G)
    assert resid <= 1e-8 * np.linalg.norm(0.05 * G)


@pytest.mark.parametrize("P, m", [(6, 40), (40, 6)])
def test_direct_kernel_and_update_agree(P, m, rng):
    O = rows(rng, 2, m, P)
    e = rng.normal(size=(2, m)) + 0.1j * rng.normal(size=(2, m))
    cfg = SRConfig(learning_rate=0.02, diag_shift=1e-3)
    Y, eps = sr_factors(e, O)
    direct = sr_step(Y.T @ Y, 2 * Y.T @ eps, cfg)
    kernel = sr_step_kernel(Y, eps, cfg)
    assert np.allclose(direct, kernel, atol=1e-10)
    for solver in ("direct", "kernel", "auto"):
        d, info = sr_update(e, O, SRConfig(learning_rate=0.02, diag_shift=1e-3, solver=solver))
        assert np.allclose(d, direct, atol=1e-10)


def test_singular_system_reports_condition():
    cfg = SRConfig(learning_rate=0.1, diag_shift=1e-3)
    S = -np.eye(2)  # not positive definite after the shift
    with pytest.raises(SRSolveError, match="condition"):
        sr_step(S, np.ones(2), cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        SRConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        SRConfig(diag_shift=-1.0)
    with pytest.raises(ValueError):
        SRConfig(solver="qr")


# --------------------------------------------------------------------------- training loop


def _tiny_run(tmp_path, R=2, steps=3, seed=0, name="rec.jsonl"):
    fam = TransverseFieldIsing(LatticeGeometry.chain(8))
    psi = small_vit(8, seed=seed)
    gam = np.linspace(0.8, 1.2, R)[:, None]
    sr = SRConfig(learning_rate=0.05, diag_shift=1e-3, n_steps=steps, n_samples=200)
    sc = SamplerConfig(n_samples=200, chains_per_system=50, burn_in=5, seed=seed)
    path = tmp_path / name
    optimize(psi, fam, gam, sr, sc, record_path=path)
    return psi, [json.loads(line) for line in path.read_text().splitlines()]


def test_records_are_complete_and_deterministic(tmp_path):
    _, a = _tiny_run(tmp_path, name="a.jsonl")
    _, b = _tiny_run(tmp_path, name="b.jsonl")
    assert [r["step"] for r in a] == [1, 2, 3]
    for k in ("energy_mean", "energy_var", "acceptance", "dtheta_norm", "wall_time"):
        assert k in a[0]
    assert len(a[0]["energy_mean"]) == 2
    strip = lambda recs: [{k: v for k, v in r.items() if k != "wall_time"} for r in recs]
    assert strip(a) == strip(b)


def test_single_system_is_plain_sr(tmp_path):
    _, recs = _tiny_run(tmp_path, R=1, steps=2)
    assert len(recs[0]["energy_mean"]) == 1


def test_training_lowers_energy():
    fam = TransverseFieldIsing(LatticeGeometry.chain(8))
    psi = small_vit(8, seed=1)
    gam = np.array([[0.6], [1.4]])
    start = [exact_variational_energy(psi, fam, g) for g in gam]
    sr = SRConfig(learning_rate=0.05, diag_shift=1e-3, n_steps=30, n_samples=400)
    optimize(psi, fam, gam, sr, SamplerConfig(n_samples=400, chains_per_system=50, burn_in=5))
    end = [exact_variational_energy(psi, fam, g) for g in gam]
    e0 = [exact.ground_energy(fam, g) for g in gam]
    for s_, e_, ref in zip(start, end, e0):
        assert e_ < s_ and (e_ - ref) < 0.5 * (s_ - ref)


def test_divergence_guard_checkpoints_then_raises(tmp_path):
    fam = TransverseFieldIsing(LatticeGeometry.chain(8))
    psi = small_vit(8)
    saved = []
    # an absurd learning rate throws the state far uphill on the second step
    sr = SRConfig(learning_rate=500.0, diag_shift=1e-4, n_steps=20, n_samples=200,
                  divergence_factor=1.0)
    with pytest.raises(DivergenceError):
        optimize(psi, fam, [[1.0]], sr, SamplerConfig(n_samples=200, chains_per_system=20, burn_in=2),
                 checkpoint_fn=lambda p, st: saved.append(st.step))
    assert saved


def test_run_record_json_roundtrip():
    rec = RunRecord(step=1, energy_mean=[-1.0], energy_var=[0.1], acceptance=[0.5], dtheta_norm=0.1,
                    grad_norm=0.2, loss=-1.0, wall_time=0.01, degenerate_sampling=False)
    assert json.loads(rec.to_json())["energy_mean"] == [-1.0]
