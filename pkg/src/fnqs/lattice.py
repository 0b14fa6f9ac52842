"""Periodic chains and square lattices, neighbor tables and patch layouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LatticeGeometry:
    """A periodic chain of ``extent`` sites or an ``extent x extent`` square lattice.

    Sites of the square lattice are indexed as ``x + L * y``.
    """

    kind: str
    extent: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.kind not in ("chain", "square"):
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        if self.boundary != "periodic":
            raise ValueError("only periodic boundaries are supported")
        if self.extent < 2:
            raise ValueError("lattice extent must be at least 2")

    @classmethod
    def chain(cls, n: int) -> "LatticeGeometry":
        return cls("chain", n)

    @classmethod
    def square(cls, side: int) -> "LatticeGeometry":
        return cls("square", side)

    @property
    def n_sites(self) -> int:
        return self.extent if self.kind == "chain" else self.extent**2

    @property
    def dim(self) -> int:
        return 1 if self.kind == "chain" else 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.extent,) * self.dim

    def coords(self) -> np.ndarray:
        """Integer coordinates, shape (N, dim)."""
        idx = np.arange(self.n_sites)
        if self.kind == "chain":
            return idx[:, None]
        return np.stack([idx % self.extent, idx // self.extent], axis=1)

    def site(self, coord) -> int:
        c = np.asarray(coord) % self.extent
        if self.kind == "chain":
            return int(c.reshape(-1)[0])
        return int(c[0] + self.extent * c[1])

    def translate(self, shift) -> np.ndarray:
        """Permutation ``p`` with ``p[i]`` the image of site ``i`` under ``shift``."""
        shift = np.atleast_1d(np.asarray(shift))
        c = (self.coords() + shift[None, :]) % self.extent
        if self.kind == "chain":
            return c[:, 0]
        return c[:, 0] + self.extent * c[:, 1]

    def offsets(self, shell: int) -> list[tuple[int, ...]]:
        """Directed bond offsets for neighbor shells 1 (distance 1), 2 (sqrt 2) and 3 (distance 2).

        Every site is paired with ``site + offset`` for each offset, so each bond of
        a shell appears once for ``L > 4``. On the 4x4 cluster the third shell pairs
        ``r`` and ``r + 2x`` twice, as in the per-site sum convention.
        """
        if self.kind == "chain":
            table = {1: [(1,)], 2: [], 3: [(2,)]}
        else:
            table = {1: [(1, 0), (0, 1)], 2: [(1, 1), (1, -1)], 3: [(2, 0), (0, 2)]}
        if shell not in table:
            raise ValueError(f"unsupported neighbor shell {shell}")
        return table[shell]

    def bonds(self, offset) -> np.ndarray:
        """Pairs ``(i, i + offset)`` for every site, shape (N, 2)."""
        i = np.arange(self.n_sites)
        return np.stack([i, self.translate(offset)], axis=1)

    def neighbors(self, shell: int) -> np.ndarray:
        """All bonds of a neighbor shell, concatenated over its offsets."""
        offs = self.offsets(shell)
        if not offs:
            return np.zeros((0, 2), dtype=int)
        return np.concatenate([self.bonds(o) for o in offs])

    def displacement(self, i, j) -> np.ndarray:
        """Coordinate difference ``r_j - r_i`` reduced to [0, L)."""
        c = self.coords()
        return (c[j] - c[i]) % self.extent

    def momenta(self) -> np.ndarray:
        """All lattice momenta, shape (N, dim)."""
        ks = 2 * np.pi * np.arange(self.extent) / self.extent
        if self.kind == "chain":
            return ks[:, None]
        kx, ky = np.meshgrid(ks, ks, indexing="xy")
        return np.stack([kx.ravel(), ky.ravel()], axis=1)

    def check_momentum(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=float))
        if k.shape != (self.dim,):
            raise ValueError(f"momentum must have {self.dim} components")
        m = k * self.extent / (2 * np.pi)
        if not np.allclose(m, np.round(m), atol=1e-9):
            raise ValueError(f"k={k.tolist()} is not on the reciprocal lattice")
        return k

    def sublattice(self) -> np.ndarray:
        """Checkerboard sublattice index (0 or 1) of every site; needs even extent."""
        if self.extent % 2:
            raise ValueError("the lattice is not bipartite for odd extent")
        return self.coords().sum(axis=1) % 2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "extent": self.extent, "boundary": self.boundary}

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeGeometry":
        return cls(d["kind"], int(d["extent"]), d.get("boundary", "periodic"))


@dataclass(frozen=True)
class PatchLayout:
    """Partition of a lattice into equal patches.

    ``index[p]`` lists the sites of patch ``p`` in a fixed order; ``grid`` is the
    shape of the patch lattice, and ``relative[p, q]`` enumerates the displacement
    from patch ``p`` to patch ``q`` on that grid (used by translation-invariant
    attention).
    """

    index: np.ndarray
    grid: tuple[int, ...]
    relative: np.ndarray

    @property
    def n_patches(self) -> int:
        return self.index.shape[0]

    @property
    def patch_volume(self) -> int:
        return self.index.shape[1]

    def translate_patches(self, lattice: LatticeGeometry, steps=1) -> np.ndarray:
        """Site permutation that moves every patch by ``steps`` patches along the first axis."""
        b = self.patch_volume if lattice.kind == "chain" else int(round(np.sqrt(self.patch_volume)))
        shift = np.zeros(lattice.dim, dtype=int)
        shift[0] = b * steps
        return lattice.translate(shift)


def make_patches(lattice: LatticeGeometry, b: int) -> PatchLayout:
    """Split a chain into blocks of ``b`` sites, or a square lattice into ``b x b`` squares."""
    L = lattice.extent
    if L % b:
        raise ValueError(f"lattice extent {L} is not divisible by patch size {b}")
    g = L // b
    if lattice.kind == "chain":
        index = np.arange(L).reshape(g, b)
        grid = (g,)
        p = np.arange(g)
        relative = (p[None, :] - p[:, None]) % g
    else:
        rows = []
        for py in range(g):
            for px in range(g):
                sites = [(px * b + dx) + L * (py * b + dy) for dy in range(b) for dx in range(b)]
                rows.append(sites)
        index = np.array(rows)
        grid = (g, g)
        px = np.arange(g * g) % g
        py = np.arange(g * g) // g
        dx = (px[None, :] - px[:, None]) % g
        dy = (py[None, :] - py[:, None]) % g
        relative = dx + g * dy
    return PatchLayout(index=index, grid=grid, relative=relative)
