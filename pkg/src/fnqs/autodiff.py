"""A small reverse-mode differentiation tape over batched numpy arrays.

Activations carry a leading batch axis. Parameters are unbatched leaves whose
gradients are kept *per sample*: after a backward pass ``param.grad`` has shape
``(B, *param.shape)``, which is what stochastic reconfiguration needs (the full
Jacobian, not its mean). Batched inputs (e.g. Hamiltonian couplings) get
ordinary batched gradients.

Adjoints may be complex. All primitives except the output head are real
functions, so seeding a complex head with ``1`` yields
``d Re(out)/dx + i d Im(out)/dx`` in a single backward sweep.

Usage::

    with Tape() as tape:
        out = some_function(param("W", w), inputs(x))
    tape.backward(out, np.ones(batch))
"""

from __future__ import annotations

import numpy as np

CHECK_FINITE = True


class NonFiniteError(FloatingPointError):
    pass


class TapeExhaustedError(RuntimeError):
    pass


class Var:
    __slots__ = ("value", "grad", "parents", "vjp", "kind", "name", "requires_grad")

    def __init__(self, value, kind="op", name=None, requires_grad=False):
        self.value = value
        self.grad = None
        self.parents = ()
        self.vjp = None
        self.kind = kind
        self.name = name
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.kind}, {self.name or ''}, shape={self.value.shape})"


_stack: list["Tape"] = []


class Tape:
    """Records primitives executed inside its context for one backward pass."""

    def __init__(self):
        self.nodes: list[Var] = []
        self.used = False

    def __enter__(self):
        _stack.append(self)
        return self

    def __exit__(self, *exc):
        _stack.remove(self)
        return False

    def backward(self, out: Var, seed) -> None:
        if self.used:
            raise TapeExhaustedError("tape already consumed by a backward pass")
        self.used = True
        out.grad = np.asarray(seed)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None:
                continue
            grads = node.vjp(g)
            for p, gp in zip(node.parents, grads):
                if gp is None or not p.requires_grad:
                    continue
                if CHECK_FINITE and not np.all(np.isfinite(gp)):
                    raise NonFiniteError(f"non-finite adjoint flowing out of {node.name}")
                p.grad = gp if p.grad is None else p.grad + gp
            if node.kind == "op":
                node.grad = None
        self.nodes.clear()


def _recording(parents) -> Tape | None:
    if not _stack:
        return None
    return _stack[-1] if any(p.requires_grad for p in parents) else None


def _node(name, value, parents, make_vjp):
    if CHECK_FINITE and not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite output from primitive {name}")
    out = Var(value, "op", name)
    tape = _recording(parents)
    if tape is not None:
        out.parents = tuple(parents)
        out.vjp = make_vjp()
        out.requires_grad = True
        tape.nodes.append(out)
    return out


def param(name, value) -> Var:
    """Unbatched trainable leaf; receives per-sample gradients."""
    return Var(np.asarray(value), "param", name, requires_grad=True)


def inputs(value, requires_grad=True, name="input") -> Var:
    """Batched leaf (leading axis is the batch)."""
    return Var(np.asarray(value), "input", name, requires_grad=requires_grad)


def constant(value, name="const") -> Var:
    return Var(np.asarray(value), "const", name, requires_grad=False)


def _sum_middle(a: np.ndarray) -> np.ndarray:
    """Sum every axis except the first (batch) and last."""
    if a.ndim <= 2:
        return a
    return a.reshape(a.shape[0], -1, a.shape[-1]).sum(axis=1)


# --------------------------------------------------------------------------- #
# Primitives
# --------------------------------------------------------------------------- #


def dense(x: Var, W: Var, b: Var | None = None) -> Var:
    """``x @ W + b`` over the last axis of a batched ``x``."""
    xv, Wv = x.value, W.value
    y = xv @ Wv
    if b is not None:
        y = y + b.value
    parents = (x, W) if b is None else (x, W, b)

    def make_vjp():
        def vjp(g):
            dx = g @ Wv.T if x.requires_grad else None
            if xv.ndim == 2:
                dW = xv[:, :, None] * g[:, None, :]
            else:
                x3 = xv.reshape(xv.shape[0], -1, xv.shape[-1])
                g3 = g.reshape(g.shape[0], -1, g.shape[-1])
                dW = np.matmul(x3.transpose(0, 2, 1), g3)
            if b is None:
                return dx, dW
            return dx, dW, _sum_middle(g)

        return vjp

    return _node("dense", y, parents, make_vjp)


def layer_norm(x: Var, gamma: Var, beta: Var, eps: float = 1e-5) -> Var:
    xv = x.value
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    y = xhat * gamma.value + beta.value

    def make_vjp():
        def vjp(g):
            dxhat = g * gamma.value
            dx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            return dx, _sum_middle(g * xhat), _sum_middle(g)

        return vjp

    return _node("layer_norm", y, (x, gamma, beta), make_vjp)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Var) -> Var:
    """Tanh approximation of the Gaussian error linear unit."""
    xv = x.value
    x2 = xv * xv  # xv**3 goes through the slow generic pow
    t = np.tanh(_GELU_C * xv * (1.0 + 0.044715 * x2))
    y = 0.5 * xv * (1.0 + t)

    def make_vjp():
        def vjp(g):
            du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
            d = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du
            return (g * d,)

        return vjp

    return _node("gelu", y, (x,), make_vjp)


def tanh(x: Var) -> Var:
    t = np.tanh(x.value)

    def make_vjp():
        return lambda g: (g * (1.0 - t**2),)

    return _node("tanh", t, (x,), make_vjp)


def add(a: Var, b: Var) -> Var:
    def make_vjp():
        return lambda g: (g, g)

    return _node("add", a.value + b.value, (a, b), make_vjp)


def multiply(a: Var, b: Var) -> Var:
    """Elementwise product of two batched tensors of equal shape."""
    av, bv = a.value, b.value

    def make_vjp():
        return lambda g: (g * bv, g * av)

    return _node("multiply", av * bv, (a, b), make_vjp)


def reshape(x: Var, shape) -> Var:
    """Reshape the non-batch axes."""
    old = x.value.shape

    def make_vjp():
        return lambda g: (g.reshape(old),)

    return _node("reshape", x.value.reshape((old[0],) + tuple(shape)), (x,), make_vjp)


def concat(xs, axis=-1) -> Var:
    vals = [x.value for x in xs]
    out = np.concatenate(vals, axis=axis)
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def make_vjp():
        return lambda g: tuple(np.split(g, sizes, axis=axis))

    return _node("concat", out, tuple(xs), make_vjp)


def sum_axis(x: Var, axis: int) -> Var:
    if axis == 0:
        raise ValueError("cannot sum over the batch axis")
    shape = x.value.shape

    def make_vjp():
        return lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _node("sum", x.value.sum(axis=axis), (x,), make_vjp)


def broadcast_positions(x: Var, n: int) -> Var:
    """(B, c) -> (B, n, c) by repetition."""
    xv = x.value

    def make_vjp():
        return lambda g: (g.sum(axis=1),)

    out = np.broadcast_to(xv[:, None, :], (xv.shape[0], n, xv.shape[1])).copy()
    return _node("broadcast", out, (x,), make_vjp)


def gather(x: Var, index: np.ndarray) -> Var:
    """(B, M) -> (B, *index.shape) with ``out[b, ...] = x[b, index]``."""
    xv = x.value
    flat = index.reshape(-1)

    def make_vjp():
        def vjp(g):
            dx = np.zeros(xv.shape, dtype=np.result_type(g, xv))
            np.add.at(dx, (slice(None), flat), g.reshape(g.shape[0], -1))
            return (dx,)

        return vjp

    return _node("gather", xv[:, index], (x,), make_vjp)


def position_mix(v: Var, weights: Var, index: np.ndarray) -> Var:
    """Input-independent attention: ``out[b,i,h] = sum_j A[h,i,j] v[b,j,h]``.

    ``A[h, i, j] = weights[h, index[i, j]]``. With ``index[i, j] = (j - i) mod n``
    the mixing is translation invariant; with ``index = arange(n*n)`` it is an
    unconstrained positional attention matrix.
    """
    vv = v.value  # (B, n, H, dh)
    w = weights.value  # (H, K)
    A = w[:, index]  # (H, n, n)
    vt = vv.transpose(0, 2, 1, 3)  # (B, H, n, dh)
    out = np.matmul(A[None], vt).transpose(0, 2, 1, 3)
    K = w.shape[1]
    n = index.shape[0]

    def make_vjp():
        def vjp(g):
            gt = g.transpose(0, 2, 1, 3)  # (B, H, n, dh)
            dv = None
            if v.requires_grad:
                dv = np.matmul(A.transpose(0, 2, 1)[None], gt).transpose(0, 2, 1, 3)
            dA = np.matmul(gt, vt.transpose(0, 1, 3, 2))  # (B, H, n, n)
            onehot = np.zeros((n * n, K))
            onehot[np.arange(n * n), index.reshape(-1)] = 1.0
            dw = dA.reshape(dA.shape[0], dA.shape[1], n * n) @ onehot
            return dv, dw

        return vjp

    return _node("position_mix", out, (v, weights), make_vjp)


def complex_head(u: Var, w_re: Var, w_im: Var) -> Var:
    """``u @ (w_re + i w_im)`` for a batched real ``u`` of shape (B, d)."""
    uv = u.value
    out = uv @ w_re.value + 1j * (uv @ w_im.value)

    def make_vjp():
        def vjp(g):
            du = g[:, None] * (w_re.value + 1j * w_im.value)[None, :]
            return du, g[:, None] * uv, 1j * g[:, None] * uv

        return vjp

    return _node("complex_head", out, (u, w_re, w_im), make_vjp)
