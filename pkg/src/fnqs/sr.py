"""Ensemble stochastic reconfiguration.

For each system k the sampled local energies ``e`` (M_k,) and log-derivative
rows ``O`` (M_k, P) give

    G_k = 2 Re( (O - <O>)^H (e - <e>) ) / M_k
    S_k = Re( (O - <O>)^H (O - <O>) ) / M_k

and the update is ``dtheta = -eta (S + lambda I)^{-1} G`` with ``S`` and ``G``
the uniform averages over systems. Stacking the real and imaginary parts of the
centred, rescaled rows of every system into one real matrix ``Y`` (2M, P)
gives ``S = Y^T Y`` and ``G = 2 Y^T eps``, so the same step can be taken in
parameter space ("direct") or in sample space ("kernel"):

    dtheta = -2 eta Y^T (Y Y^T + lambda I)^{-1} eps
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.linalg.blas import dsyrk

from .hamiltonians import HamiltonianFamily, local_energies
from .sampler import ChainState, SamplerConfig, run_chains


class SRSolveError(np.linalg.LinAlgError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, msg, step, checkpoint=None):
        super().__init__(msg)
        self.step = step
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class SRConfig:
    learning_rate: float = 0.03
    diag_shift: float = 1e-4
    n_steps: int = 2000
    n_samples: int = 4000
    solver: str = "direct"
    checkpoint_every: int = 100
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.diag_shift <= 0:
            raise ValueError("learning_rate and diag_shift must be positive")
        if self.solver not in ("direct", "kernel", "auto"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.n_steps < 0 or self.n_samples <= 0:
            raise ValueError("n_steps must be >= 0 and n_samples > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SRConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown SR keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GradientEstimate:
    total: np.ndarray  # (P,)
    per_system: np.ndarray  # (R, P)


@dataclass
class QGTEstimate:
    matrix: np.ndarray  # (P, P)
    n_samples: int
    _rank: int | None = field(default=None, repr=False)

    @property
    def rank(self) -> int:
        """Numerical rank; below ``P`` the shift ``lambda`` is what makes the system solvable."""
        if self._rank is None:
            w = np.linalg.eigvalsh(self.matrix)
            tol = max(w.max(initial=0.0), 0.0) * len(w) * np.finfo(float).eps
            self._rank = int(np.sum(w > tol))
        return self._rank

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.matrix.shape[0]


def _per_system(a, name):
    a = np.asarray(a)
    if a.ndim < 2:
        raise ValueError(f"{name} must be grouped by system: shape (R, M_k, ...)")
    if a.shape[1] == 0:
        raise ValueError("empty per-system batch")
    return a


def _weights(weights, shape):
    if weights is None:
        return np.full(shape, 1.0 / shape[1])
    w = np.asarray(weights, dtype=float)
    if w.shape != shape or np.any(w < 0):
        raise ValueError("weights must be nonnegative with shape (R, M_k)")
    return w / w.sum(axis=1, keepdims=True)


def estimate_gradient(e_loc, jacobians, weights=None) -> GradientEstimate:
    """Ensemble energy gradient from local energies (R, M_k) and rows (R, M_k, P).

    Samples are weighted uniformly unless ``weights`` (R, M_k) is given, e.g.
    ``|psi|^2`` over an enumerated basis.
    """
    e = _per_system(e_loc, "local energies")
    O = _per_system(jacobians, "jacobians")
    if not np.all(np.isfinite(e)):
        bad = np.argwhere(~np.isfinite(e))
        raise FloatingPointError(f"non-finite local energies at (system, sample) {bad[:5].tolist()}")
    if O.shape[:2] != e.shape:
        raise ValueError("jacobian rows are not aligned with local energies")
    w = _weights(weights, e.shape)
    ec = e - np.einsum("km,km->k", w, e)[:, None]
    Oc = O - np.einsum("km,kmp->kp", w, O)[:, None, :]
    per = 2.0 * np.einsum("kmp,km->kp", Oc.conj(), w * ec).real
    return GradientEstimate(per.mean(axis=0), per)


def estimate_qgt(jacobians, weights=None) -> QGTEstimate:
    O = _per_system(jacobians, "jacobians")
    R, m, _ = O.shape
    w = _weights(weights, (R, m))
    Oc = O - np.einsum("km,kmp->kp", w, O)[:, None, :]
    S = np.einsum("kmp,kmq->pq", Oc.conj(), w[:, :, None] * Oc).real / R
    return QGTEstimate(0.5 * (S + S.T), R * m)


def sr_factors(e_loc, jacobians):
    """Real factors ``(Y, eps)`` with ``S = Y^T Y`` and ``G = 2 Y^T eps``."""
    e = _per_system(e_loc, "local energies")
    O = _per_system(jacobians, "jacobians")
    R, m, P = O.shape
    scale = 1.0 / np.sqrt(R * m)
    Oc = (O - O.mean(axis=1, keepdims=True)).reshape(R * m, P)
    ec = (e - e.mean(axis=1, keepdims=True)).reshape(R * m)
    Y = np.concatenate([Oc.real, Oc.imag], axis=0) * scale
    eps = np.concatenate([ec.real, ec.imag]) * scale
    return Y, eps


def sr_step(S, G, config: SRConfig) -> np.ndarray:
    """``-eta (S + lambda I)^{-1} G`` by Cholesky factorization."""
    S = np.asarray(S, dtype=float)
    G = np.asarray(G, dtype=float)
    if S.shape != (len(G), len(G)):
        raise ValueError("S and G shapes are inconsistent")
    A = S + config.diag_shift * np.eye(len(G))
    return -config.learning_rate * _spd_solve(A, G)


def sr_step_kernel(Y, eps, config: SRConfig) -> np.ndarray:
    """Same update through the (2M x 2M) sample-space system."""
    K = Y @ Y.T
    K[np.diag_indices_from(K)] += config.diag_shift
    return -2.0 * config.learning_rate * (Y.T @ _spd_solve(K, eps))


def _spd_solve(A, b):
    try:
        c = sla.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        try:
            cond = np.linalg.cond(A)
        except np.linalg.LinAlgError:
            cond = np.inf
        raise SRSolveError(f"SR linear solve failed (condition number ~{cond:.3g}): {exc}") from exc
    return sla.cho_solve(c, b)


def sr_update(e_loc, jacobians, config: SRConfig) -> tuple[np.ndarray, dict]:
    """One SR update from grouped local energies and jacobian rows."""
    Y, eps = sr_factors(e_loc, jacobians)
    G = 2.0 * (Y.T @ eps)
    solver = config.solver
    if solver == "auto":
        solver = "kernel" if Y.shape[0] < Y.shape[1] else "direct"
    if solver == "kernel":
        dtheta = sr_step_kernel(Y, eps, config)
    else:
        # lower triangle of Y^T Y; dsyrk does half the work of a full product
        S = dsyrk(1.0, Y.T, trans=0, lower=1)  # Y.T is F-ordered: no copy
        S[np.diag_indices_from(S)] += config.diag_shift
        dtheta = -config.learning_rate * sla.cho_solve(_cho_lower(S), G)
    return dtheta, {"grad_norm": float(np.linalg.norm(G)), "solver": solver}


def _cho_lower(S):
    try:
        return sla.cho_factor(S, lower=True, overwrite_a=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SRSolveError(f"SR linear solve failed: {exc}") from exc


# --------------------------------------------------------------------------- #
# Training loop
# --------------------------------------------------------------------------- #


@dataclass
class RunRecord:
    step: int
    energy_mean: list
    energy_var: list
    acceptance: list
    dtheta_norm: float
    grad_norm: float
    loss: float
    wall_time: float
    degenerate_sampling: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainState:
    step: int = 0
    chains: ChainState | None = None
    initial_loss: float | None = None
    initial_spread: float | None = None


def evaluate_batch(psi, family: HamiltonianFamily, gammas, batch, params=True):
    """Local energies (R, M_k) and jacobian rows (R, M_k, P) for a sample batch."""
    R, m, n = batch.samples.shape
    flat = batch.samples.reshape(R * m, n)
    g = np.repeat(np.atleast_2d(gammas), m, axis=0)
    if params:
        lp, O, _ = psi.jacobians(flat, g, couplings=False)
    else:
        lp, O = batch.log_psi.reshape(-1), None
    e = local_energies(family, g, flat, psi.log_psi, log_psi_sigma=lp)
    e = e.reshape(R, m)
    return e, (O.reshape(R, m, -1) if O is not None else None)


def optimize(psi, family: HamiltonianFamily, gammas, sr_config: SRConfig,
             sampler_config: SamplerConfig, state: TrainState | None = None,
             record_path: str | Path | None = None, checkpoint_fn=None, log=None):
    """Run SR steps until ``sr_config.n_steps`` and return the final ``TrainState``.

    ``psi.theta`` is updated in place. ``checkpoint_fn(psi, state)`` is called
    every ``checkpoint_every`` steps, at the end, and before aborting on
    divergence. One :class:`RunRecord` per step is appended to ``record_path``.
    """
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    if sampler_config.n_samples != sr_config.n_samples:
        raise ValueError("sampler and SR configs disagree on the total number of samples")
    state = TrainState() if state is None else state
    out = open(record_path, "a") if record_path is not None else None
    try:
        while state.step < sr_config.n_steps:
            t0 = time.perf_counter()
            try:
                batch, state.chains = run_chains(psi.log_psi, family, gammas, sampler_config,
                                                 state.chains)
                e, O = evaluate_batch(psi, family, gammas, batch)
            except FloatingPointError as exc:
                # overflowing amplitudes: the previous update has blown up the state
                path = checkpoint_fn(psi, state) if checkpoint_fn else None
                raise DivergenceError(f"non-finite evaluation at step {state.step}: {exc}",
                                      state.step, path) from exc
            means = e.real.mean(axis=1)
            var = e.var(axis=1)
            loss = float(means.mean())
            spread = float(np.sqrt(var.mean()))
            if state.initial_loss is None:
                state.initial_loss, state.initial_spread = loss, spread
            limit = state.initial_loss + sr_config.divergence_factor * max(state.initial_spread, 1e-12)
            if not np.isfinite(loss) or loss > limit:
                path = checkpoint_fn(psi, state) if checkpoint_fn else None
                raise DivergenceError(
                    f"ensemble energy {loss:.6g} exceeded {limit:.6g} at step {state.step}",
                    state.step, path)
            dtheta, info = sr_update(e, O, sr_config)
            psi.theta = psi.theta + dtheta
            state.step += 1
            rec = RunRecord(
                step=state.step, energy_mean=means.tolist(), energy_var=var.tolist(),
                acceptance=batch.acceptance.tolist(), dtheta_norm=float(np.linalg.norm(dtheta)),
                grad_norm=info["grad_norm"], loss=loss, wall_time=time.perf_counter() - t0,
                degenerate_sampling=batch.degenerate)
            if out is not None:
                out.write(rec.to_json() + "\n")
                out.flush()
            if log is not None:
                log(rec)
            if checkpoint_fn and sr_config.checkpoint_every and state.step % sr_config.checkpoint_every == 0:
                checkpoint_fn(psi, state)
        if checkpoint_fn:
            checkpoint_fn(psi, state)
    finally:
        if out is not None:
            out.close()
    return state
