"""Run configuration: one JSON document describing a complete run.

Unknown keys anywhere are errors, and every validation failure names the
offending field. Example::

    {
      "family": {"name": "tfi_chain", "lattice": {"kind": "chain", "extent": 16}},
      "distribution": {"kind": "grid", "count": 5, "low": [0.8], "high": [1.2]},
      "vit": {"n_layers": 2, "n_heads": 4, "d_model": 16, "patch": 4},
      "sr": {"learning_rate": 0.03, "diag_shift": 1e-4, "n_steps": 300, "n_samples": 4000},
      "sampler": {"n_samples": 4000, "chains_per_system": 800, "burn_in": 20},
      "output_dir": "runs/tfi16",
      "seed": 0
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .couplings import CouplingDistribution, sample_couplings
from .hamiltonians import HamiltonianFamily, family_from_dict
from .lattice import make_patches
from .sampler import SamplerConfig
from .sr import SRConfig
from .vit import ViTConfig

MODES = ("train", "evaluate", "chi-sweep", "oracle")
OBSERVABLES = ("energy", "v_score", "m2_long_range", "m2", "neel_m2", "stripe_m2", "dimer_d2")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluateSpec:
    """Coupling points to evaluate a trained model on (training points or unseen ones)."""

    gammas: tuple[tuple[float, ...], ...]
    n_samples: int = 4000
    chains_per_system: int = 100
    burn_in: int = 50
    observables: tuple[str, ...] = ("energy", "v_score")

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluateSpec":
        _check_keys(d, cls, "evaluate")
        out = dict(d)
        out["gammas"] = tuple(tuple(float(x) for x in g) for g in d["gammas"])
        if "observables" in d:
            out["observables"] = tuple(d["observables"])
        return cls(**out)

    def to_dict(self) -> dict:
        return {"gammas": [list(g) for g in self.gammas], "n_samples": self.n_samples,
                "chains_per_system": self.chains_per_system, "burn_in": self.burn_in,
                "observables": list(self.observables)}


@dataclass(frozen=True)
class SweepSpec:
    """Grid of coupling points for a fidelity-susceptibility sweep."""

    grid: CouplingDistribution
    n_samples: int = 4000
    chains_per_system: int = 100
    burn_in: int = 50
    clip: tuple[float, float] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        _check_keys(d, cls, "chi_sweep")
        out = dict(d)
        out["grid"] = CouplingDistribution.from_dict(d["grid"])
        if d.get("clip") is not None:
            out["clip"] = tuple(float(x) for x in d["clip"])
        return cls(**out)

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "n_samples": self.n_samples,
                "chains_per_system": self.chains_per_system, "burn_in": self.burn_in,
                "clip": None if self.clip is None else list(self.clip)}


@dataclass(frozen=True)
class RunConfig:
    family: dict
    distribution: CouplingDistribution
    vit: ViTConfig
    sr: SRConfig
    sampler: SamplerConfig
    output_dir: str = "run"
    seed: int = 0
    mode: str = "train"
    evaluate: EvaluateSpec | None = None
    chi_sweep: SweepSpec | None = None
    description: str = ""
    _family_obj: HamiltonianFamily | None = field(default=None, compare=False, repr=False)

    # ------------------------------------------------------------------ #

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, cls, "run config", skip=("_family_obj",))
        for req in ("family", "distribution", "vit", "sr", "sampler"):
            if req not in d:
                raise ConfigError(f"{req}: missing required section")
        kw = dict(
            family=dict(d["family"]),
            distribution=_wrap("distribution", CouplingDistribution.from_dict, d["distribution"]),
            vit=_wrap("vit", ViTConfig.from_dict, d["vit"]),
            sr=_wrap("sr", SRConfig.from_dict, d["sr"]),
            sampler=_wrap("sampler", SamplerConfig.from_dict, d["sampler"]),
        )
        for k in ("output_dir", "seed", "mode", "description"):
            if k in d:
                kw[k] = d[k]
        if d.get("evaluate") is not None:
            kw["evaluate"] = _wrap("evaluate", EvaluateSpec.from_dict, d["evaluate"])
        if d.get("chi_sweep") is not None:
            kw["chi_sweep"] = _wrap("chi_sweep", SweepSpec.from_dict, d["chi_sweep"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "distribution": self.distribution.to_dict(),
            "vit": self.vit.to_dict(),
            "sr": self.sr.to_dict(),
            "sampler": self.sampler.to_dict(),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "mode": self.mode,
            "evaluate": None if self.evaluate is None else self.evaluate.to_dict(),
            "chi_sweep": None if self.chi_sweep is None else self.chi_sweep.to_dict(),
            "description": self.description,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(d)

    def save(self, path) -> Path:
        path = Path(path)
        tmp = path.with_name(f".{path.name}.tmp")
        tmp.write_text(self.to_json())
        tmp.replace(path)
        return path

    def digest(self, exclude=("output_dir", "mode", "evaluate", "chi_sweep", "description")) -> str:
        """Hash of the fields that determine a training run."""
        d = {k: v for k, v in self.to_dict().items() if k not in exclude}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, output_dir=None, mode=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), sampler=replace(cfg.sampler, seed=int(seed)))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        if mode is not None:
            cfg = replace(cfg, mode=mode)
        cfg.validate()
        return cfg

    # ------------------------------------------------------------------ #

    def build_family(self) -> HamiltonianFamily:
        try:
            return family_from_dict(self.family)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"family: {exc}") from exc

    def training_couplings(self) -> np.ndarray:
        try:
            seed = self.seed if self.distribution.seed is None else self.distribution.seed
            return sample_couplings(self.distribution, seed=seed)
        except ValueError as exc:
            raise ConfigError(f"distribution: {exc}") from exc

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got {self.mode!r}")
        fam = self.build_family()
        unknown = set(self.family) - {"name", "lattice", "J"}
        if unknown:
            raise ConfigError(f"family: unknown keys {sorted(unknown)}")
        gam = self.training_couplings()
        if gam.shape[1] != fam.n_couplings:
            raise ConfigError(
                f"distribution: produces {gam.shape[1]} couplings, {fam.name} needs {fam.n_couplings}")
        R = len(gam)
        if self.sr.n_samples != self.sampler.n_samples:
            raise ConfigError("sr.n_samples: must equal sampler.n_samples")
        if self.sampler.n_samples % R:
            raise ConfigError(
                f"sampler.n_samples: {self.sampler.n_samples} is not divisible by {R} systems")
        if (self.sampler.n_samples // R) % self.sampler.chains_per_system:
            raise ConfigError(
                f"sampler.chains_per_system: does not divide {self.sampler.n_samples // R} samples per system")
        try:
            make_patches(fam.lattice, self.vit.patch)
        except ValueError as exc:
            raise ConfigError(f"vit.patch: {exc}") from exc
        if self.vit.embedding == "concat" and fam.n_couplings >= fam.n_sites:
            raise ConfigError("vit.embedding: site-resolved couplings need 'split'")
        if self.vit.embedding == "split" and fam.n_couplings != fam.n_sites:
            raise ConfigError("vit.embedding: 'split' needs one coupling per site")
        if self.vit.sign_rule == "marshall" and fam.lattice.extent % 2:
            raise ConfigError("vit.sign_rule: the Marshall sign needs a bipartite lattice")
        if self.evaluate is not None:
            for g in self.evaluate.gammas:
                if len(g) != fam.n_couplings:
                    raise ConfigError(f"evaluate.gammas: {list(g)} has the wrong number of couplings")
            bad = set(self.evaluate.observables) - set(OBSERVABLES)
            if bad:
                raise ConfigError(f"evaluate.observables: unknown {sorted(bad)}")
            n_eval = len(self.evaluate.gammas)
            if self.evaluate.n_samples % (n_eval * self.evaluate.chains_per_system):
                raise ConfigError(
                    "evaluate.n_samples: must be divisible by (number of points x chains_per_system)")
        if self.chi_sweep is not None:
            try:
                pts = sample_couplings(self.chi_sweep.grid)
            except ValueError as exc:
                raise ConfigError(f"chi_sweep.grid: {exc}") from exc
            if pts.shape[1] != fam.n_couplings:
                raise ConfigError("chi_sweep.grid: wrong number of couplings")
            if self.chi_sweep.n_samples % (len(pts) * self.chi_sweep.chains_per_system):
                raise ConfigError(
                    "chi_sweep.n_samples: must be divisible by (number of points x chains_per_system)")
        object.__setattr__(self, "_family_obj", fam)


def _check_keys(d: dict, cls, where: str, skip=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    known = set(cls.__dataclass_fields__) - set(skip)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _wrap(where, fn, d):
    try:
        return fn(d)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
