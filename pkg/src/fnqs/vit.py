"""Vision-Transformer wavefunction conditioned on Hamiltonian couplings.

``log psi(sigma | gamma)`` is computed in three stages:

1. the configuration is split into patches; each patch is linearly embedded
   together with the couplings, either by appending the O(1) coupling scalars
   to every patch (``embedding="concat"``) or, for O(N) site-resolved
   couplings, by patching them like the spins and embedding both with separate
   matrices into two halves of the embedding vector (``embedding="split"``);
2. pre-norm encoder blocks with positional (input-independent) multi-head
   attention and a GELU MLP;
3. the outputs are summed over positions, layer-normalized, and mapped by a
   complex linear head to the log-amplitude.

``sign_rule="marshall"`` multiplies the amplitude by the fixed sign
``(-1)^(number of up spins on sublattice A)``, a standard prior for
antiferromagnets on bipartite lattices. It has no parameters.

With ``symmetric=True`` the attention weights depend only on the relative
displacement between patches, which makes the amplitude exactly invariant under
translations by whole patches.

``spin_flip=True`` symmetrizes the amplitude, ``psi(sigma) + psi(-sigma)``. On
Ising chains in the ordered phase this keeps the model in the even sector
instead of letting it settle into one of the two nearly degenerate polarized
states, whose coupling-dependent mixing would otherwise dominate ``chi``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .lattice import LatticeGeometry, PatchLayout, make_patches

MLP_FACTOR = 2
HEAD_INIT_SCALE = 1e-2


@dataclass(frozen=True)
class ViTConfig:
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 16
    patch: int = 4
    embedding: str = "concat"
    symmetric: bool = True
    mlp_factor: int = MLP_FACTOR
    sign_rule: str = "none"
    spin_flip: bool = False

    def __post_init__(self):
        if self.sign_rule not in ("none", "marshall"):
            raise ValueError(f"unknown sign rule {self.sign_rule!r}")
        if self.embedding not in ("concat", "split"):
            raise ValueError(f"unknown embedding mode {self.embedding!r}")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.embedding == "split" and self.d_model % 2:
            raise ValueError("split embedding needs an even d_model")
        if min(self.n_layers, self.n_heads, self.d_model, self.patch, self.mlp_factor) < 1:
            raise ValueError("ViT sizes must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        if not self.spin_flip:
            # written only when set, so documents from before the option keep their digests
            del d["spin_flip"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ViTConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown ViT config keys: {sorted(unknown)}")
        return cls(**d)


class ViTWavefunction:
    """Parameter layout, initialization and evaluation of the ansatz.

    The trainable parameters live in one flat float64 vector ``theta``; the
    layout is the deterministic list ``self.layout`` of ``(name, shape)``.
    """

    def __init__(self, config: ViTConfig, lattice: LatticeGeometry, n_couplings: int,
                 seed: int | None = 0, theta: np.ndarray | None = None):
        self.config = config
        self.lattice = lattice
        self.n_couplings = n_couplings
        self.patches: PatchLayout = make_patches(lattice, config.patch)
        n = self.patches.n_patches
        pv = self.patches.patch_volume
        if config.embedding == "split" and n_couplings != lattice.n_sites:
            raise ValueError("split embedding needs one coupling per site")
        if config.embedding == "concat" and n_couplings >= lattice.n_sites:
            raise ValueError("concat embedding is meant for O(1) couplings; use split")
        if config.symmetric:
            self.attn_index = self.patches.relative
            n_attn = n
        else:
            self.attn_index = np.arange(n * n).reshape(n, n)
            n_attn = n * n
        d, H = config.d_model, config.n_heads
        hid = config.mlp_factor * d
        layout = []
        if config.embedding == "concat":
            layout += [("embed/W", (pv + n_couplings, d)), ("embed/b", (d,))]
        else:
            layout += [("embed/W_spin", (pv, d // 2)), ("embed/b_spin", (d // 2,)),
                       ("embed/W_coupling", (pv, d // 2)), ("embed/b_coupling", (d // 2,))]
        for l in range(config.n_layers):
            p = f"layer{l}/"
            layout += [
                (p + "ln1/g", (d,)), (p + "ln1/b", (d,)),
                (p + "attn/Wv", (d, d)), (p + "attn/bv", (d,)),
                (p + "attn/weights", (H, n_attn)),
                (p + "attn/Wo", (d, d)), (p + "attn/bo", (d,)),
                (p + "ln2/g", (d,)), (p + "ln2/b", (d,)),
                (p + "mlp/W1", (d, hid)), (p + "mlp/b1", (hid,)),
                (p + "mlp/W2", (hid, d)), (p + "mlp/b2", (d,)),
            ]
        layout += [("out/ln/g", (d,)), ("out/ln/b", (d,)), ("head/re", (d,)), ("head/im", (d,))]
        self.layout = layout
        sizes = [int(np.prod(s)) for _, s in layout]
        self.offsets = dict(zip([k for k, _ in layout], np.concatenate([[0], np.cumsum(sizes)[:-1]])))
        self.n_params = int(sum(sizes))
        self._sign_sites = None
        if config.sign_rule == "marshall":
            self._sign_sites = np.nonzero(lattice.sublattice() == 0)[0]
        self.theta = self.init_params(seed) if theta is None else np.array(theta, dtype=float)
        if self.theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {self.theta.shape}")

    # ------------------------------------------------------------------ #

    @property
    def n_positions(self) -> int:
        return self.patches.n_patches

    def segment(self, name: str) -> slice:
        shape = dict(self.layout)[name]
        off = self.offsets[name]
        return slice(off, off + int(np.prod(shape)))

    def unflatten(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {name: theta[self.segment(name)].reshape(shape) for name, shape in self.layout}

    def init_params(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        theta = np.zeros(self.n_params)
        for name, shape in self.layout:
            leaf = name.rsplit("/", 1)[-1]
            sl = self.segment(name)
            if name.startswith("head/"):
                theta[sl] = HEAD_INIT_SCALE * rng.standard_normal(int(np.prod(shape)))
            elif leaf == "g":
                theta[sl] = 1.0
            elif leaf == "weights":
                theta[sl] = rng.standard_normal(int(np.prod(shape))) / np.sqrt(self.n_positions)
            elif leaf.startswith("W"):
                theta[sl] = rng.standard_normal(int(np.prod(shape))) / np.sqrt(shape[0])
        return theta

    # ------------------------------------------------------------------ #

    def _check(self, sigma, gamma):
        s = np.asarray(sigma)
        g = np.asarray(gamma, dtype=float)
        if s.ndim == 1:
            s = s[None]
        if g.ndim == 1:
            g = g[None]
        if len(g) == 1 and len(s) > 1:
            g = np.repeat(g, len(s), axis=0)
        if s.shape[1] != self.lattice.n_sites:
            raise ValueError(f"configuration length {s.shape[1]} != {self.lattice.n_sites}")
        if g.shape != (len(s), self.n_couplings):
            raise ValueError(f"couplings must have shape ({len(s)}, {self.n_couplings})")
        return s, g

    def _forward(self, params: dict, sigma: np.ndarray, gamma_var: ad.Var) -> ad.Var:
        cfg = self.config
        n = self.n_positions
        d, H = cfg.d_model, cfg.n_heads
        spins = ad.constant(sigma[:, self.patches.index].astype(float))
        if cfg.embedding == "concat":
            tokens = ad.concat([spins, ad.broadcast_positions(gamma_var, n)], axis=-1)
            x = ad.dense(tokens, params["embed/W"], params["embed/b"])
        else:
            xs = ad.dense(spins, params["embed/W_spin"], params["embed/b_spin"])
            xg = ad.dense(ad.gather(gamma_var, self.patches.index),
                          params["embed/W_coupling"], params["embed/b_coupling"])
            x = ad.concat([xs, xg], axis=-1)
        for l in range(cfg.n_layers):
            p = f"layer{l}/"
            h = ad.layer_norm(x, params[p + "ln1/g"], params[p + "ln1/b"])
            v = ad.reshape(ad.dense(h, params[p + "attn/Wv"], params[p + "attn/bv"]), (n, H, d // H))
            a = ad.reshape(ad.position_mix(v, params[p + "attn/weights"], self.attn_index), (n, d))
            x = ad.add(x, ad.dense(a, params[p + "attn/Wo"], params[p + "attn/bo"]))
            h = ad.layer_norm(x, params[p + "ln2/g"], params[p + "ln2/b"])
            h = ad.gelu(ad.dense(h, params[p + "mlp/W1"], params[p + "mlp/b1"]))
            x = ad.add(x, ad.dense(h, params[p + "mlp/W2"], params[p + "mlp/b2"]))
        z = ad.sum_axis(x, 1)
        u = ad.layer_norm(z, params["out/ln/g"], params["out/ln/b"])
        return ad.complex_head(u, params["head/re"], params["head/im"])

    def _param_vars(self, theta):
        return {k: ad.param(k, v) for k, v in self.unflatten(theta).items()}

    def log_psi(self, sigma, gamma, theta=None, chunk: int = 1024) -> np.ndarray:
        """Complex log-amplitudes for a batch, one coupling row per configuration."""
        s, g = self._check(sigma, gamma)
        if not self.config.spin_flip:
            return self._log_psi(s, g, theta, chunk)
        la, lb = self._log_psi(s, g, theta, chunk), self._log_psi(-s, g, theta, chunk)
        return _log_add(la, lb)

    def _log_psi(self, s, g, theta, chunk):
        th = self.theta if theta is None else theta
        params = {k: ad.constant(v, k) for k, v in self.unflatten(th).items()}
        out = np.empty(len(s), dtype=complex)
        for a in range(0, len(s), chunk):
            gv = ad.constant(g[a : a + chunk])
            out[a : a + chunk] = self._forward(params, s[a : a + chunk], gv).value
        return out + self._sign_phase(s)

    def _sign_phase(self, s):
        """``i pi`` times the number of up spins on sublattice A, when requested."""
        if self._sign_sites is None:
            return 0.0
        return 1j * np.pi * (s[:, self._sign_sites] > 0).sum(axis=1)

    def jacobians(self, sigma, gamma, theta=None, params: bool = True, couplings: bool = True,
                  chunk: int = 512):
        """Log-amplitudes and their derivatives from shared forward passes.

        Returns ``(log_psi, O, C)`` with ``O[b, a] = d log psi_b / d theta_a``
        (complex, shape (B, P)) and ``C[b, i] = d log psi_b / d gamma_i``
        (shape (B, N_c)); either may be ``None`` if not requested.
        """
        s, g = self._check(sigma, gamma)
        if not self.config.spin_flip:
            return self._jacobians(s, g, theta, params, couplings, chunk)
        la, Oa, Ca = self._jacobians(s, g, theta, params, couplings, chunk)
        lb, Ob, Cb = self._jacobians(-s, g, theta, params, couplings, chunk)
        lp = _log_add(la, lb)
        # d log(a + b) = (a d log a + b d log b) / (a + b)
        wa, wb = np.exp(la - lp)[:, None], np.exp(lb - lp)[:, None]
        O = wa * Oa + wb * Ob if params else None
        C = wa * Ca + wb * Cb if couplings else None
        return lp, O, C

    def _jacobians(self, s, g, theta, params, couplings, chunk):
        th = self.theta if theta is None else theta
        B = len(s)
        lp = np.empty(B, dtype=complex)
        O = np.zeros((B, self.n_params), dtype=complex) if params else None
        C = np.zeros((B, self.n_couplings), dtype=complex) if couplings else None
        for a in range(0, B, chunk):
            sl = slice(a, min(a + chunk, B))
            pv = self._param_vars(th) if params else {
                k: ad.constant(v, k) for k, v in self.unflatten(th).items()}
            gv = ad.inputs(g[sl], requires_grad=couplings, name="couplings")
            with ad.Tape() as tape:
                out = self._forward(pv, s[sl], gv)
            lp[sl] = out.value + self._sign_phase(s[sl])
            if not (params or couplings):
                continue
            tape.backward(out, np.ones(len(out.value), dtype=complex))
            if params:
                for name, _ in self.layout:
                    grad = pv[name].grad
                    if grad is not None:
                        O[sl, self.segment(name)] = grad.reshape(grad.shape[0], -1)
            if couplings:
                C[sl] = gv.grad if gv.grad is not None else 0.0
        return lp, O, C

    def __call__(self, sigma, gamma):
        return self.log_psi(sigma, gamma)

    def copy(self) -> "ViTWavefunction":
        return ViTWavefunction(self.config, self.lattice, self.n_couplings, theta=self.theta.copy())


def _log_add(la, lb):
    """``log(exp(la) + exp(lb))`` for complex arrays, stable in the real part."""
    m = np.maximum(la.real, lb.real)
    return m + np.log(np.exp(la - m) + np.exp(lb - m))
