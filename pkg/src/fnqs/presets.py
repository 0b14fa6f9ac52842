"""Desk-scale run configurations used by the acceptance suite and the demos.

Every preset returns a validated :class:`RunConfig`; ``configs/`` in the
repository holds the same documents as JSON for the command line.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig

DESK_VIT = {"n_layers": 2, "n_heads": 4, "d_model": 16, "patch": 4, "mlp_factor": 2}


def _chain(name, n, **extra):
    return {"name": name, "lattice": {"kind": "chain", "extent": n}, **extra}


def tfi_ensemble(n_sites=16, low=0.8, high=1.2, count=5, n_steps=400, n_samples=4000,
                 learning_rate=0.03, seed=0, output_dir="runs/tfi") -> RunConfig:
    """Uniform chain, ensemble on an equispaced field grid."""
    return RunConfig.from_dict({
        "family": _chain("tfi_chain", n_sites),
        "distribution": {"kind": "grid", "count": count, "low": [low], "high": [high]},
        "vit": dict(DESK_VIT),
        "sr": {"learning_rate": learning_rate, "diag_shift": 1e-4, "n_steps": n_steps,
               "n_samples": n_samples},
        "sampler": {"n_samples": n_samples, "chains_per_system": n_samples // count,
                    "burn_in": 20, "seed": seed},
        "output_dir": output_dir,
        "seed": seed,
    })


def tfi_chi(n_sites, n_steps=400, seed=0, spin_flip=True) -> RunConfig:
    """Dense field grid around the transition, for susceptibility curves.

    The spin-flip projection keeps the ordered side in the Z2-even sector, where
    the exact ground state lives.
    """
    low, high = {8: (0.5, 1.3), 12: (0.6, 1.3), 16: (0.7, 1.25)}.get(n_sites, (0.6, 1.3))
    cfg = tfi_ensemble(n_sites, low, high, count=40, n_steps=n_steps, seed=seed,
                       output_dir=f"runs/tfi_chi_{n_sites}")
    if spin_flip:
        data = cfg.to_dict()
        data["vit"]["spin_flip"] = True
        cfg = RunConfig.from_dict(data)
    return cfg


def random_tfi(n_realizations, n_sites=16, h0=1.0, n_steps=300, n_samples=4000, seed=0,
               output_dir=None) -> RunConfig:
    """Disordered chain, one ensemble member per field realization."""
    R = n_realizations
    per = n_samples // R
    return RunConfig.from_dict({
        "family": _chain("random_tfi_chain", n_sites),
        "distribution": {"kind": "per_site_uniform", "count": R, "h0": h0, "n_sites": n_sites,
                         "seed": 1000 + R},
        "vit": {**DESK_VIT, "embedding": "split", "symmetric": False},
        "sr": {"learning_rate": 0.03, "diag_shift": 1e-4, "n_steps": n_steps, "n_samples": per * R},
        "sampler": {"n_samples": per * R, "chains_per_system": per, "burn_in": 20, "seed": seed},
        "output_dir": output_dir or f"runs/random_tfi_{R}",
        "seed": seed,
    })


J1J2_POINTS = (0.0, 0.15, 0.3, 0.4, 0.5)


def j1j2(points=J1J2_POINTS, extent=4, n_steps=500, n_samples=4000, seed=0) -> RunConfig:
    """Square-lattice J1-J2 model on a set of frustration ratios, Marshall sign prior."""
    R = len(points)
    per = n_samples // R
    return RunConfig.from_dict({
        "family": {"name": "j1j2_square", "lattice": {"kind": "square", "extent": extent}},
        "distribution": {"kind": "points", "points": [[p] for p in points]},
        "vit": {**DESK_VIT, "patch": 2, "sign_rule": "marshall"},
        "sr": {"learning_rate": 0.03, "diag_shift": 1e-4, "n_steps": n_steps, "n_samples": per * R},
        "sampler": {"n_samples": per * R, "chains_per_system": per, "burn_in": 20, "seed": seed},
        "output_dir": "runs/j1j2",
        "seed": seed,
    })


def unseen_fields(n=4, low=0.85, step=0.1) -> np.ndarray:
    return (low + step * np.arange(n))[:, None]
