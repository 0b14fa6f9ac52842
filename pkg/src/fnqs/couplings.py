"""Coupling distributions and the ensembles drawn from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CouplingDistribution:
    """Where the ensemble of Hamiltonians comes from.

    kind:
      ``grid``             equispaced points, ``low``/``high`` per axis and ``count``
                           points per axis (cartesian product for two axes)
      ``points``           an explicit list of coupling vectors
      ``delta``            ``count`` copies of ``low``
      ``uniform``          ``count`` i.i.d. draws from the box ``[low, high]``
      ``per_site_uniform`` ``count`` realizations of ``n_sites`` i.i.d. fields on ``[0, h0]``
      ``single_axis``      ``count`` draws with one uniformly chosen axis drawn
                           from ``[low, high]`` and the others at zero
    """

    kind: str
    count: int
    low: tuple[float, ...] = ()
    high: tuple[float, ...] = ()
    points: tuple[tuple[float, ...], ...] = ()
    h0: float = 1.0
    n_sites: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "count": self.count}
        if self.low:
            d["low"] = list(self.low)
        if self.high:
            d["high"] = list(self.high)
        if self.points:
            d["points"] = [list(p) for p in self.points]
        if self.kind == "per_site_uniform":
            d["h0"] = self.h0
            d["n_sites"] = self.n_sites
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CouplingDistribution":
        known = {"kind", "count", "low", "high", "points", "h0", "n_sites", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown coupling distribution keys: {sorted(unknown)}")
        return cls(
            kind=d["kind"],
            count=int(d.get("count", len(d.get("points", [])))),
            low=tuple(float(x) for x in d.get("low", ())),
            high=tuple(float(x) for x in d.get("high", ())),
            points=tuple(tuple(float(x) for x in p) for p in d.get("points", ())),
            h0=float(d.get("h0", 1.0)),
            n_sites=int(d.get("n_sites", 0)),
            seed=d.get("seed"),
        )


def sample_couplings(dist: CouplingDistribution, seed=None) -> np.ndarray:
    """Coupling vectors as an array of shape (R, N_c).

    Grid and point supports are returned exactly; random kinds are reproducible
    for a given seed (argument, then ``dist.seed``).
    """
    if dist.count <= 0 and dist.kind != "points":
        raise ValueError("the number of realizations must be positive")
    rng = np.random.default_rng(dist.seed if seed is None else seed)
    low = np.asarray(dist.low, dtype=float)
    high = np.asarray(dist.high, dtype=float)

    if dist.kind == "grid":
        if low.size == 0 or low.shape != high.shape:
            raise ValueError("grid needs low/high of equal length")
        axes = [np.linspace(a, b, dist.count) for a, b in zip(low, high)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if dist.kind == "points":
        if not dist.points:
            raise ValueError("empty support")
        return np.asarray(dist.points, dtype=float)
    if dist.kind == "delta":
        if low.size == 0:
            raise ValueError("empty support")
        return np.repeat(low[None, :], dist.count, axis=0)
    if dist.kind == "uniform":
        if low.size == 0 or np.any(high < low):
            raise ValueError("empty support")
        return rng.uniform(low, high, size=(dist.count, low.size))
    if dist.kind == "per_site_uniform":
        if dist.n_sites <= 0 or dist.h0 < 0:
            raise ValueError("per-site distribution needs n_sites > 0 and h0 >= 0")
        return rng.uniform(0.0, dist.h0, size=(dist.count, dist.n_sites))
    if dist.kind == "single_axis":
        if low.size == 0:
            raise ValueError("empty support")
        out = np.zeros((dist.count, low.size))
        axis = rng.integers(low.size, size=dist.count)
        out[np.arange(dist.count), axis] = rng.uniform(low[axis], high[axis])
        return out
    raise ValueError(f"unknown distribution kind {dist.kind!r}")
