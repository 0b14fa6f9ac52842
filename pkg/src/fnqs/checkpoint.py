"""Checkpoint directories.

Layout::

    <dir>/config.json   header, model/lattice/family metadata, step, RNG state
    <dir>/weights.npy   flat float64 parameter vector (order: header["layout"])
    <dir>/chains.npz    Markov-chain state (optional)
    <dir>/README.md     human-readable card

A checkpoint is written into a sibling temporary directory and moved into place
with ``os.replace``/``os.rename``, so a partially written checkpoint never sits
under the final name.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hamiltonians import HamiltonianFamily, family_from_dict
from .lattice import LatticeGeometry
from .sampler import ChainState
from .vit import ViTConfig, ViTWavefunction

FORMAT = "fnqs-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    psi: ViTWavefunction
    family: HamiltonianFamily
    step: int = 0
    gammas: np.ndarray | None = None
    chains: ChainState | None = None
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    psi = ckpt.psi
    rng_state = ckpt.rng_state
    if rng_state is None and ckpt.chains is not None:
        rng_state = ckpt.chains.rng_state()
    header = {
        "format": FORMAT,
        "version": VERSION,
        "vit": psi.config.to_dict(),
        "lattice": psi.lattice.to_dict(),
        "family": ckpt.family.to_dict(),
        "n_couplings": psi.n_couplings,
        "n_params": psi.n_params,
        "layout": [[name, list(shape)] for name, shape in psi.layout],
        "step": int(ckpt.step),
        "gammas": None if ckpt.gammas is None else np.asarray(ckpt.gammas, dtype=float).tolist(),
        "rng_state": rng_state,
        "chains_burned_in": None if ckpt.chains is None else bool(ckpt.chains.burned_in),
        "extra": ckpt.extra,
    }
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        np.save(tmp / "weights.npy", psi.theta.astype(np.float64), allow_pickle=False)
        if ckpt.chains is not None:
            np.savez(tmp / "chains.npz", **ckpt.chains.to_arrays())
        (tmp / "README.md").write_text(_card(header))
        # the header goes last; its presence marks a complete directory
        (tmp / "config.json").write_text(json.dumps(header, indent=2))
        if path.exists():
            old = Path(tempfile.mkdtemp(prefix=f".{path.name}.old.", dir=path.parent))
            os.rmdir(old)
            os.rename(path, old)
            os.rename(tmp, path)
            shutil.rmtree(old, ignore_errors=True)
        else:
            os.rename(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    cfg = path / "config.json"
    if not cfg.exists():
        raise CheckpointError(f"{path} is not a complete checkpoint (no config.json)")
    header = json.loads(cfg.read_text())
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown format {header.get('format')!r}")
    if header.get("version") != VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {header.get('version')} != supported {VERSION}")
    theta = np.load(path / "weights.npy", allow_pickle=False)
    lattice = LatticeGeometry.from_dict(header["lattice"])
    psi = ViTWavefunction(ViTConfig.from_dict(header["vit"]), lattice, header["n_couplings"],
                          theta=theta)
    if [[n, list(s)] for n, s in psi.layout] != header["layout"]:
        raise CheckpointError(f"{path}: parameter layout does not match this code version")
    psi.theta = theta  # keep the loaded array itself, bit for bit
    family = family_from_dict(header["family"])
    chains = None
    if (path / "chains.npz").exists():
        arr = np.load(path / "chains.npz", allow_pickle=False)
        rng = np.random.default_rng()
        rng.bit_generator.state = header["rng_state"]
        chains = ChainState(sigma=arr["sigma"], log_psi=arr["log_psi"], rng=rng,
                            accepted=arr["accepted"], proposed=arr["proposed"],
                            burned_in=bool(header["chains_burned_in"]))
    gammas = None if header["gammas"] is None else np.asarray(header["gammas"], dtype=float)
    return Checkpoint(psi=psi, family=family, step=header["step"], gammas=gammas, chains=chains,
                      rng_state=header["rng_state"], extra=header.get("extra", {}))


def _card(header: dict) -> str:
    v = header["vit"]
    lat = header["lattice"]
    lines = [
        f"# {header['family']['name']} on {lat['kind']} {lat['extent']}",
        "",
        f"- format: {header['format']} v{header['version']}",
        f"- optimization step: {header['step']}",
        f"- parameters: {header['n_params']} (float64, `weights.npy`, order as in `config.json:layout`)",
        f"- transformer: {v['n_layers']} layers, {v['n_heads']} heads, d={v['d_model']}, "
        f"patch={v['patch']}, embedding={v['embedding']}, symmetric={v['symmetric']}",
        f"- couplings per system: {header['n_couplings']}",
    ]
    if header["gammas"] is not None:
        lines.append(f"- training ensemble: {len(header['gammas'])} systems")
    return "\n".join(lines) + "\n"
