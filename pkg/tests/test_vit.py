import numpy as np
import pytest

from fnqs.lattice import LatticeGeometry
from fnqs.vit import ViTConfig, ViTWavefunction

from _support import small_vit


def spins(rng, b, n):
    return rng.choice(np.array([-1, 1], dtype=np.int8), size=(b, n))


def fd_rows(psi, s, g, n_probe=20, step=1e-4, seed=0):
    """Central differences of log psi along random single parameters / couplings."""
    rng = np.random.default_rng(seed)
    lp, O, C = psi.jacobians(s, g)
    for a in rng.choice(psi.n_params, size=n_probe, replace=False):
        th_p, th_m = psi.theta.copy(), psi.theta.copy()
        th_p[a] += step
        th_m[a] -= step
        fd = (psi.log_psi(s, g, th_p) - psi.log_psi(s, g, th_m)) / (2 * step)
        scale = np.maximum(np.abs(fd), 1e-3)
        assert np.all(np.abs(O[:, a] - fd) / scale < 1e-5), (a, O[:, a], fd)
    for i in range(C.shape[1]):
        gp, gm = g.copy(), g.copy()
        gp[:, i] += step
        gm[:, i] -= step
        fd = (psi.log_psi(s, gp) - psi.log_psi(s, gm)) / (2 * step)
        scale = np.maximum(np.abs(fd), 1e-3)
        assert np.all(np.abs(C[:, i] - fd) / scale < 1e-5), (i, C[:, i], fd)
    return lp, O, C


def test_parameter_count_and_layout():
    psi = small_vit(8)
    assert psi.n_params == sum(int(np.prod(s)) for _, s in psi.layout)
    names = [n for n, _ in psi.layout]
    assert names[0] == "embed/W" and names[-1] == "head/im"
    seg = psi.unflatten(psi.theta)
    assert seg["layer0/attn/weights"].shape == (2, 4)  # symmetric: one weight per offset


def test_desk_configuration_size():
    cfg = ViTConfig(n_layers=2, n_heads=4, d_model=16, patch=4, mlp_factor=2)
    psi = ViTWavefunction(cfg, LatticeGeometry.chain(16), 1)
    assert psi.n_positions == 4
    assert psi.n_params == 3552


def test_finite_differences_concat(rng):
    psi = small_vit(8, head_scale=100.0)
    s = spins(rng, 4, 8)
    g = rng.uniform(0.5, 1.5, (4, 1))
    lp, O, C = fd_rows(psi, s, g)
    assert C.shape == (4, 1)
    assert np.allclose(lp, psi.log_psi(s, g))


def test_finite_differences_split_unconstrained(rng):
    psi = small_vit(8, n_couplings=8, head_scale=100.0, embedding="split", symmetric=False)
    s = spins(rng, 3, 8)
    g = rng.uniform(0, 1, (3, 8))
    fd_rows(psi, s, g, seed=1)


def test_finite_differences_square_two_couplings(rng):
    psi = small_vit(4, n_couplings=2, kind="square", head_scale=100.0, sign_rule="marshall")
    s = spins(rng, 3, 16)
    g = rng.uniform(0, 0.5, (3, 2))
    lp, O, C = fd_rows(psi, s, g, seed=2)
    assert C.shape == (3, 2)


def test_zero_head_gives_zero(rng):
    psi = small_vit(8)
    th = psi.theta.copy()
    th[psi.segment("head/re")] = 0
    th[psi.segment("head/im")] = 0
    out = psi.log_psi(spins(rng, 5, 8), rng.uniform(size=(5, 1)), th)
    assert np.all(out == 0)


def test_head_linearity(rng):
    psi = small_vit(8)
    s, g = spins(rng, 5, 8), rng.uniform(size=(5, 1))
    th = psi.theta.copy()
    th[psi.segment("head/re")] *= 2
    assert np.allclose(psi.log_psi(s, g, th).real, 2 * psi.log_psi(s, g).real, rtol=1e-13)
    assert np.allclose(psi.log_psi(s, g, th).imag, psi.log_psi(s, g).imag, rtol=1e-13)


def test_real_part_independent_of_imaginary_head(rng):
    psi = small_vit(8)
    _, O, _ = psi.jacobians(spins(rng, 4, 8), rng.uniform(size=(4, 1)))
    assert np.all(O[:, psi.segment("head/im")].real == 0)
    assert np.all(O[:, psi.segment("head/re")].imag == 0)


def test_deterministic(rng):
    s, g = spins(rng, 6, 8), rng.uniform(size=(6, 1))
    a = small_vit(8, seed=4).log_psi(s, g)
    b = small_vit(8, seed=4).log_psi(s, g)
    assert np.array_equal(a, b)
    assert np.array_equal(a, small_vit(8, seed=4).log_psi(s, g))


def test_identical_samples_identical_rows(rng):
    psi = small_vit(8)
    s = np.repeat(spins(rng, 1, 8), 3, axis=0)
    _, O, C = psi.jacobians(s, np.full((3, 1), 0.7))
    assert np.array_equal(O[0], O[1]) and np.array_equal(O[1], O[2])


def test_translation_invariance_chain(rng):
    psi = small_vit(16, patch=4, seed=3)
    s = spins(rng, 10, 16)
    g = np.full((10, 1), 0.9)
    shifted = np.roll(s, 4, axis=1)
    assert np.max(np.abs(psi.log_psi(s, g) - psi.log_psi(shifted, g))) <= 1e-12


def test_translation_invariance_split_mode(rng):
    psi = small_vit(8, n_couplings=8, embedding="split", seed=3)
    s, g = spins(rng, 6, 8), rng.uniform(size=(6, 8))
    out = psi.log_psi(np.roll(s, 2, axis=1), np.roll(g, 2, axis=1))
    assert np.max(np.abs(out - psi.log_psi(s, g))) <= 1e-12


def test_translation_invariance_square(rng):
    lat = LatticeGeometry.square(4)
    psi = small_vit(4, kind="square", seed=5)
    s, g = spins(rng, 6, 16), np.full((6, 1), 0.2)
    for shift in ((2, 0), (0, 2)):
        perm = lat.translate(shift)
        moved = np.empty_like(s)
        moved[:, perm] = s
        assert np.max(np.abs(psi.log_psi(moved, g) - psi.log_psi(s, g))) <= 1e-12


def test_unconstrained_attention_breaks_translation(rng):
    psi = small_vit(16, patch=4, symmetric=False, seed=3, head_scale=100.0)
    s, g = spins(rng, 4, 16), np.full((4, 1), 0.9)
    assert not np.allclose(psi.log_psi(s, g), psi.log_psi(np.roll(s, 4, axis=1), g))


def test_split_mode_without_coupling_embedding(rng):
    psi = small_vit(8, n_couplings=8, embedding="split", symmetric=False)
    th = psi.theta.copy()
    th[psi.segment("embed/W_coupling")] = 0
    psi.theta = th
    s = spins(rng, 4, 8)
    _, _, C = psi.jacobians(s, rng.uniform(size=(4, 8)))
    assert np.all(C == 0)
    assert np.allclose(psi.log_psi(s, rng.uniform(size=(4, 8))), psi.log_psi(s, rng.uniform(size=(4, 8))))


def test_split_halves_equal_when_embeddings_match(rng):
    # gamma = sigma as numbers with identical embedding matrices: both halves coincide
    from fnqs import autodiff as ad

    psi = small_vit(8, n_couplings=8, embedding="split")
    p = psi.unflatten(psi.theta.copy())
    W, b = p["embed/W_spin"], p["embed/b_spin"]
    s = spins(rng, 3, 8)
    sp = ad.constant(s[:, psi.patches.index].astype(float))
    xs = ad.dense(sp, ad.constant(W), ad.constant(b)).value
    xg = ad.dense(ad.gather(ad.constant(s.astype(float)), psi.patches.index),
                  ad.constant(W), ad.constant(b)).value
    assert np.array_equal(xs, xg)


def test_couplings_change_output(rng):
    psi = small_vit(8, head_scale=100.0)
    s = spins(rng, 1, 8)
    assert not np.isclose(psi.log_psi(s, [[0.5]])[0], psi.log_psi(s, [[1.5]])[0])


def test_marshall_sign(rng):
    base = small_vit(4, kind="square", seed=2)
    signed = ViTWavefunction(ViTConfig(**{**base.config.to_dict(), "sign_rule": "marshall"}),
                             base.lattice, 1, theta=base.theta)
    s, g = spins(rng, 5, 16), np.zeros((5, 1))
    diff = signed.log_psi(s, g) - base.log_psi(s, g)
    n_up_a = (s[:, base.lattice.sublattice() == 0] > 0).sum(axis=1)
    assert np.allclose(diff, 1j * np.pi * n_up_a)


def test_spin_flip_symmetrized(rng):
    base = small_vit(8, seed=5, head_scale=30.0)
    sym = ViTWavefunction(ViTConfig(**{**base.config.to_dict(), "spin_flip": True}),
                          base.lattice, 1, theta=base.theta)
    s, g = spins(rng, 6, 8), rng.uniform(0.5, 1.5, (6, 1))
    a, b = sym.log_psi(s, g), sym.log_psi(-s, g)
    assert np.allclose(np.exp(a - b), 1.0, atol=1e-12)
    ref = np.log(np.exp(base.log_psi(s, g)) + np.exp(base.log_psi(-s, g)))
    assert np.allclose(np.exp(a - ref), 1.0, atol=1e-12)


def test_finite_differences_spin_flip(rng):
    psi = small_vit(8, seed=6, head_scale=100.0, spin_flip=True)
    s = spins(rng, 4, 8)
    g = rng.uniform(0.5, 1.5, (4, 1))
    lp, _, _ = fd_rows(psi, s, g, seed=3)
    assert np.allclose(lp, psi.log_psi(s, g))


def test_spin_flip_serialized_only_when_set():
    assert "spin_flip" not in ViTConfig().to_dict()
    cfg = ViTConfig(spin_flip=True)
    assert ViTConfig.from_dict(cfg.to_dict()) == cfg


def test_config_validation():
    lat = LatticeGeometry.chain(8)
    with pytest.raises(ValueError):
        ViTWavefunction(ViTConfig(d_model=10, n_heads=4, patch=2), lat, 1)
    with pytest.raises(ValueError):
        ViTWavefunction(ViTConfig(patch=3), lat, 1)
    with pytest.raises(ValueError):
        ViTWavefunction(ViTConfig(patch=2, embedding="split"), lat, 1)
    with pytest.raises(ValueError):
        ViTConfig.from_dict({"d_model": 8, "colour": 1})
    cfg = ViTConfig(d_model=8, n_heads=2, patch=2, embedding="split", symmetric=False)
    assert ViTConfig.from_dict(cfg.to_dict()) == cfg


def test_input_shape_errors(rng):
    psi = small_vit(8)
    with pytest.raises(ValueError):
        psi.log_psi(spins(rng, 2, 6), np.ones((2, 1)))
    with pytest.raises(ValueError):
        psi.log_psi(spins(rng, 2, 8), np.ones((2, 2)))
