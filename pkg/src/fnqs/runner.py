"""Train / evaluate / chi-sweep / oracle pipelines driven by a :class:`RunConfig`.

Output directory layout::

    config.json        the resolved run configuration
    checkpoint/        latest checkpoint (see fnqs.checkpoint)
    records.jsonl      one RunRecord per optimization step
    evaluate.tsv       gamma_*, observable, mean, error
    chi_sweep.tsv      gamma_*, lambda_max, v_*, sigma_stat, degenerate
    oracle.tsv         gamma_*, quantity, value
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import exact, observables as obs
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .fidelity import chi as chi_estimate, leading_direction
from .sampler import SamplerConfig, run_chains
from .sr import TrainState, optimize
from .vit import ViTWavefunction

EVALUATE_COLUMNS = ("observable", "mean", "error")


def _gamma_columns(n: int) -> list[str]:
    return [f"gamma_{i + 1}" for i in range(n)]


def _write_tsv(path: Path, header: list[str], rows: list[list]) -> Path:
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t")
        w.writerow(header)
        w.writerows(rows)
    tmp.replace(path)
    return path


def read_tsv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f, delimiter="\t"))


def read_records(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


# --------------------------------------------------------------------------- #
# train
# --------------------------------------------------------------------------- #


def train(config: RunConfig, resume: bool = True, log=None) -> Path:
    """Train (or resume) and return the checkpoint directory.

    Resuming restores parameters, chain configurations and the generator state,
    so the continuation is identical to an uninterrupted run. Records written
    after the restored checkpoint are dropped before continuing.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    family = config.build_family()
    gammas = config.training_couplings()
    ckpt_dir = out / "checkpoint"
    records = out / "records.jsonl"
    state = TrainState()
    if resume and (ckpt_dir / "config.json").exists():
        ck = load_checkpoint(ckpt_dir)
        if ck.gammas is None or not np.array_equal(ck.gammas, gammas):
            raise RuntimeError(f"{ckpt_dir} was trained on a different ensemble")
        psi = ck.psi
        state = TrainState(step=ck.step, chains=ck.chains,
                           initial_loss=ck.extra.get("initial_loss"),
                           initial_spread=ck.extra.get("initial_spread"))
        _truncate_records(records, ck.step)
    else:
        psi = ViTWavefunction(config.vit, family.lattice, family.n_couplings, seed=config.seed)
        if records.exists():
            records.unlink()

    def save(p, st):
        extra = {"initial_loss": st.initial_loss, "initial_spread": st.initial_spread,
                 "config_digest": config.digest()}
        return save_checkpoint(ckpt_dir, Checkpoint(psi=p, family=family, step=st.step,
                                                    gammas=gammas, chains=st.chains, extra=extra))

    optimize(psi, family, gammas, config.sr, config.sampler, state=state, record_path=records,
             checkpoint_fn=save, log=log)
    return ckpt_dir


def _truncate_records(path: Path, step: int) -> None:
    if not path.exists():
        return
    keep = [line for line in path.read_text().splitlines() if line.strip()
            and json.loads(line)["step"] <= step]
    path.write_text("".join(line + "\n" for line in keep))


# --------------------------------------------------------------------------- #
# evaluate
# --------------------------------------------------------------------------- #


def evaluate_model(psi, family, gammas, observables, sampler_config: SamplerConfig) -> list[dict]:
    """Sample every coupling point of ``gammas`` and estimate the requested observables."""
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    batch, _ = run_chains(psi.log_psi, family, gammas, sampler_config)
    C = sampler_config.chains_per_system
    lat = family.lattice
    rows = []
    for k, g in enumerate(gammas):
        s = batch.samples[k]
        res = {}
        need_e = {"energy", "v_score"} & set(observables)
        if need_e:
            e = obs.sampled_energies(psi, family, g, s)
            res["energy"] = obs.energy(e, C)
            res["v_score"] = obs.v_score(e, family.n_sites, C)
        if "m2_long_range" in observables:
            res["m2_long_range"] = obs.zz_long_range_m2(s, C)
        if "m2" in observables:
            res["m2"] = obs.magnetization_squared(s, C)
        if {"neel_m2", "stripe_m2"} & set(observables):
            corr = obs.spin_correlation_samples(psi.log_psi, g, s)
            res["neel_m2"] = obs.neel_m2(corr, lat, C)
            res["stripe_m2"] = obs.stripe_m2(corr, lat, C)
        if "dimer_d2" in observables:
            res["dimer_d2"] = obs.dimer_order_d2(s, lat, C)
        res["acceptance"] = obs.Estimate(float(batch.acceptance[k]), 0.0)
        for name in list(observables) + ["acceptance"]:
            est = res[name]
            rows.append({"gamma": g.tolist(), "observable": name, "mean": est.mean, "error": est.error})
    return rows


def evaluate(config: RunConfig, checkpoint=None) -> Path:
    if config.evaluate is None:
        raise ValueError("evaluate: the config has no 'evaluate' section")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ck = load_checkpoint(checkpoint or out / "checkpoint")
    spec = config.evaluate
    sc = SamplerConfig(n_samples=spec.n_samples, chains_per_system=spec.chains_per_system,
                       burn_in=spec.burn_in, seed=config.sampler.seed + 1)
    rows = evaluate_model(ck.psi, ck.family, spec.gammas, spec.observables, sc)
    nc = ck.family.n_couplings
    table = [[*r["gamma"], r["observable"], r["mean"], r["error"]] for r in rows]
    return _write_tsv(out / "evaluate.tsv", _gamma_columns(nc) + list(EVALUATE_COLUMNS), table)


# --------------------------------------------------------------------------- #
# chi-sweep
# --------------------------------------------------------------------------- #


def chi_sweep(config: RunConfig, checkpoint=None) -> Path:
    if config.chi_sweep is None:
        raise ValueError("chi-sweep: the config has no 'chi_sweep' section")
    from .couplings import sample_couplings

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ck = load_checkpoint(checkpoint or out / "checkpoint")
    spec = config.chi_sweep
    pts = sample_couplings(spec.grid, seed=config.seed)
    sc = SamplerConfig(n_samples=spec.n_samples, chains_per_system=spec.chains_per_system,
                       burn_in=spec.burn_in, seed=config.sampler.seed + 2)
    batch, _ = run_chains(ck.psi.log_psi, ck.family, pts, sc)
    nc = ck.family.n_couplings
    rows = []
    for k, g in enumerate(pts):
        est = chi_estimate(ck.psi, g, batch.samples[k], sc.chains_per_system)
        lead = leading_direction(est.matrix)
        v = lead.vector
        sig = float(np.sqrt(np.sum((np.outer(v, v) * est.error) ** 2)))
        lam = lead.value if spec.clip is None else float(np.clip(lead.value, *spec.clip))
        rows.append([*g.tolist(), lam, *v.tolist(), sig, int(lead.degenerate)])
    header = (_gamma_columns(nc) + ["lambda_max"] + [f"v_{i + 1}" for i in range(nc)]
              + ["sigma_stat", "degenerate"])
    return _write_tsv(out / "chi_sweep.tsv", header, rows)


# --------------------------------------------------------------------------- #
# oracle
# --------------------------------------------------------------------------- #


def oracle_values(family, gamma) -> dict:
    """Exact reference values for one coupling point."""
    g = np.ravel(np.asarray(gamma, dtype=float))
    N = family.n_sites
    out = {}
    if family.name in ("tfi_chain", "random_tfi_chain"):
        h, J = exact.tfi_fields(family, g)
        sol = exact.solve_tfi_chain(h, J)
        zz = sol.zz_matrix() / 4.0
        out["energy"] = sol.energy
        out["m2_long_range"] = float(np.mean([zz[i, (i + N // 2) % N] for i in range(N)]))
        out["m2"] = float(zz.sum() / N**2)
        if N <= 12 and family.n_couplings == 1:
            out["chi"] = float(exact.exact_fidelity_susceptibility(family, g)[0, 0])
    else:
        sol = exact.exact_diagonalize(family, g)
        corr = exact.spin_correlations(family, sol)
        lat = family.lattice
        out["energy"] = sol.energy
        for name, k in (("neel_m2", [(np.pi, np.pi)]), ("stripe_m2", [(0.0, np.pi), (np.pi, 0.0)])):
            vals = [obs.structure_factor_samples(corr[None], lat, kk)[0] for kk in k]
            out[name] = float(np.mean(vals) / N)
    return out


def oracle(config: RunConfig, workers: int = 1) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    family = config.build_family()
    pts = (np.asarray(config.evaluate.gammas) if config.evaluate is not None
           else config.training_couplings())
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        results = list(ex.map(lambda g: oracle_values(family, g), pts))
    rows = [[*g.tolist(), name, value] for g, res in zip(pts, results) for name, value in res.items()]
    return _write_tsv(out / "oracle.tsv", _gamma_columns(family.n_couplings) + ["quantity", "value"], rows)


def run(config: RunConfig, workers: int = 1, log=None) -> Path:
    if config.mode == "train":
        return train(config, log=log)
    if config.mode == "evaluate":
        return evaluate(config)
    if config.mode == "chi-sweep":
        return chi_sweep(config)
    if config.mode == "oracle":
        return oracle(config, workers)
    raise ValueError(f"unknown mode {config.mode!r}")


def cached_training(config: RunConfig, root=None, log=None) -> Checkpoint:
    """Train once per configuration digest and reuse the finished checkpoint."""
    root = Path(root) if root is not None else exact.cache_dir() / "runs"
    cfg = replace(config, output_dir=str(root / config.digest()), mode="train")
    ckpt = Path(cfg.output_dir) / "checkpoint"
    if (ckpt / "config.json").exists():
        ck = load_checkpoint(ckpt)
        if ck.step >= cfg.sr.n_steps:
            return ck
    train(cfg, log=log)
    return load_checkpoint(ckpt)
