"""Minimal reverse-mode autodiff over float64 numpy arrays.

Define-then-run: build a DAG of Node objects once, then repeatedly bind
arrays to the Input leaves and call forward / backward on the root. Only
the operations needed by the encoder / generator / discriminator stack
exist; there is no broadcasting and no dynamic shape polymorphism beyond
the batch dimension.

Gradient convention: backward(root) requires a scalar root, overwrites the
grad of every node reachable from the root, and accumulates additively when
a node (typically a Param) feeds several branches of the same graph.
"""
from __future__ import annotations

import numpy as np


class GraphError(Exception):
    """Malformed graph or misuse of the forward/backward protocol."""


class ShapeError(GraphError):
    """Operand shapes inconsistent with the op's contract."""


class UnboundInputError(GraphError):
    """forward() called without a binding for some Input node."""


class NonScalarRootError(GraphError):
    """backward() called on a root whose value is not a scalar."""


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def sigmoid(t: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[neg])
    out[neg] = e / (1.0 + e)
    return out


def softplus(t: np.ndarray) -> np.ndarray:
    """log(1 + exp(t)) via the overflow-free max/log1p split."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


class Node:
    """One vertex of the computation DAG."""

    op = "abstract"

    def __init__(self, *inputs: "Node"):
        for inp in inputs:
            if not isinstance(inp, Node):
                raise GraphError(f"{self.op}: inputs must be Node instances, got {type(inp)!r}")
        self.inputs: list[Node] = list(inputs)
        self.value: np.ndarray | None = None
        self.grad: np.ndarray | None = None
        self._topo: list[Node] | None = None
        self._bindings: dict | None = None

    def _forward(self, *vals: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _backward(self, grad: np.ndarray, *vals: np.ndarray):
        """Return one gradient array (or None) per input."""
        raise NotImplementedError

    def _label(self) -> str:
        return self.op

    def _shape_error(self, msg: str) -> ShapeError:
        return ShapeError(f"{self._label()}: {msg}")


class Input(Node):
    """Named placeholder bound at forward() time."""

    op = "input"

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _label(self):
        return f"input '{self.name}'"


class Constant(Node):
    """Fixed, non-trainable leaf."""

    op = "constant"

    def __init__(self, value):
        super().__init__()
        self.value = _as_f64(value).copy()


class Param(Node):
    """Trainable leaf with persistent value, grad and Adam moment slots."""

    op = "param"

    def __init__(self, name: str, value):
        super().__init__()
        self.name = name
        self.value = _as_f64(value).copy()
        self.grad = np.zeros_like(self.value)
        self.moment1 = np.zeros_like(self.value)
        self.moment2 = np.zeros_like(self.value)

    def _label(self):
        return f"param '{self.name}'"


class Dense(Node):
    """Affine map y = x @ w.T + b over the flattened non-batch dims.

    x: (B, ...) flattened to (B, M); w: (N, M); b: (N,). When out_shape is
    given the (B, N) result is viewed as (B, *out_shape), which lets a dense
    expansion feed a conv stack without a separate reshape op.
    """

    op = "dense"

    def __init__(self, x: Node, w: Node, b: Node, out_shape: tuple | None = None):
        super().__init__(x, w, b)
        self.out_shape = tuple(out_shape) if out_shape is not None else None

    def _forward(self, x, w, b):
        if x.ndim < 2:
            raise self._shape_error(f"expected batched input, got shape {x.shape}")
        x2 = x.reshape(x.shape[0], -1)
        if w.ndim != 2 or w.shape[1] != x2.shape[1]:
            raise self._shape_error(f"weight {w.shape} does not match input {x2.shape}")
        if b.shape != (w.shape[0],):
            raise self._shape_error(f"bias {b.shape} does not match {w.shape[0]} outputs")
        y = x2 @ w.T + b
        if self.out_shape is not None:
            if int(np.prod(self.out_shape)) != w.shape[0]:
                raise self._shape_error(f"out_shape {self.out_shape} incompatible with {w.shape[0]} outputs")
            y = y.reshape((x.shape[0],) + self.out_shape)
        return y

    def _backward(self, g, x, w, b):
        x2 = x.reshape(x.shape[0], -1)
        g2 = g.reshape(g.shape[0], -1)
        return (g2 @ w).reshape(x.shape), g2.T @ x2, g2.sum(axis=0)


class DilatedCausalConv1d(Node):
    """1-D convolution with left zero padding of (K-1)*dilation.

    x: (B, C_in, T) or (C_in, T); w: (C_out, C_in, K); b: (C_out,).
    out[c, t] = b[c] + sum_{i,k} w[c, i, k] * xpad[i, t + k*dilation], so the
    output at t sees only inputs at positions <= t and keeps length T.
    """

    op = "dilated_causal_conv1d"

    def __init__(self, x: Node, w: Node, b: Node, dilation: int):
        super().__init__(x, w, b)
        if int(dilation) != dilation or dilation < 1:
            raise GraphError(f"dilated_causal_conv1d: dilation must be a positive integer, got {dilation!r}")
        self.dilation = int(dilation)
        self._cols = None

    def _forward(self, x, w, b):
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3:
            raise self._shape_error(f"expected (B, C, T) input, got shape {x.shape}")
        if w.ndim != 3 or w.shape[1] != x.shape[1]:
            raise self._shape_error(f"weight {w.shape} does not match {x.shape[1]} input channels")
        c_out, c_in, k = w.shape
        if b.shape != (c_out,):
            raise self._shape_error(f"bias {b.shape} does not match {c_out} output channels")
        bsz, _, t = x.shape
        pad = (k - 1) * self.dilation
        xpad = np.zeros((bsz, c_in, t + pad))
        xpad[:, :, pad:] = x
        s0, s1, s2 = xpad.strides
        win = np.lib.stride_tricks.as_strided(
            xpad, shape=(bsz, c_in, k, t), strides=(s0, s1, s2 * self.dilation, s2)
        )
        cols = np.ascontiguousarray(win.reshape(bsz, c_in * k, t))
        out = np.matmul(w.reshape(c_out, c_in * k), cols) + b[:, None]
        # cache the im2col buffer; backward reuses it for the weight gradient
        self._cols = cols
        self._squeeze = squeeze
        return out[0] if squeeze else out

    def _backward(self, g, x, w, b):
        squeeze = self._squeeze
        if squeeze:
            g = g[None]
            x = x[None]
        c_out, c_in, k = w.shape
        bsz, _, t = x.shape
        pad = (k - 1) * self.dilation
        cols = self._cols
        gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(c_out, c_in, k)
        gcols = np.matmul(w.reshape(c_out, c_in * k).T, g).reshape(bsz, c_in, k, t)
        gxpad = np.zeros((bsz, c_in, t + pad))
        for j in range(k):
            gxpad[:, :, j * self.dilation : j * self.dilation + t] += gcols[:, :, j, :]
        gx = gxpad[:, :, pad:]
        return (gx[0] if squeeze else gx), gw, g.sum(axis=(0, 2))


class LeakyRelu(Node):
    op = "leaky_relu"

    def __init__(self, x: Node, slope: float = 0.2):
        super().__init__(x)
        self.slope = float(slope)

    def _forward(self, x):
        return np.where(x >= 0, x, self.slope * x)

    def _backward(self, g, x):
        return (g * np.where(x >= 0, 1.0, self.slope),)


class Sigmoid(Node):
    op = "sigmoid"

    def _forward(self, x):
        return sigmoid(x)

    def _backward(self, g, x):
        s = self.value
        return (g * s * (1.0 - s),)


class Tanh(Node):
    op = "tanh"

    def _forward(self, x):
        return np.tanh(x)

    def _backward(self, g, x):
        return (g * (1.0 - self.value**2),)


class Add(Node):
    """Elementwise sum of two same-shape operands."""

    op = "add"

    def _forward(self, a, b):
        if a.shape != b.shape:
            raise self._shape_error(f"operand shapes differ: {a.shape} vs {b.shape}")
        return a + b

    def _backward(self, g, a, b):
        return g, g


class Affine(Node):
    """y = scale * x + shift with Python-float coefficients."""

    op = "affine"

    def __init__(self, x: Node, scale: float, shift: float = 0.0):
        super().__init__(x)
        self.scale = float(scale)
        self.shift = float(shift)

    def _forward(self, x):
        return self.scale * x + self.shift

    def _backward(self, g, x):
        return (self.scale * g,)


class Clamp(Node):
    """Elementwise clip to [lo, hi]; gradient passes only inside the band."""

    op = "clamp"

    def __init__(self, x: Node, lo: float, hi: float):
        super().__init__(x)
        if not lo < hi:
            raise GraphError(f"clamp: lo must be < hi, got [{lo}, {hi}]")
        self.lo = float(lo)
        self.hi = float(hi)

    def _forward(self, x):
        return np.clip(x, self.lo, self.hi)

    def _backward(self, g, x):
        return (g * ((x >= self.lo) & (x <= self.hi)),)


class Sum(Node):
    op = "sum"

    def _forward(self, x):
        return np.asarray(x.sum())

    def _backward(self, g, x):
        return (np.broadcast_to(g, x.shape).copy(),)


class Mean(Node):
    op = "mean"

    def _forward(self, x):
        return np.asarray(x.mean())

    def _backward(self, g, x):
        return (np.full(x.shape, float(g) / x.size),)


class Mse(Node):
    """Mean over all elements of (a - b)^2."""

    op = "mse"

    def _forward(self, a, b):
        if a.shape != b.shape:
            raise self._shape_error(f"operand shapes differ: {a.shape} vs {b.shape}")
        return np.asarray(((a - b) ** 2).mean())

    def _backward(self, g, a, b):
        d = (2.0 * float(g) / a.size) * (a - b)
        return d, -d


class Bce(Node):
    """Binary cross-entropy of logits against a fixed 0/1 label, mean-reduced.

    Computed as mean(softplus(t) - label * t), the log-sum-exp form of
    -label*log(sigmoid(t)) - (1-label)*log(1-sigmoid(t)); never evaluates
    log of a saturated probability.
    """

    op = "bce"

    def __init__(self, logits: Node, label: float):
        super().__init__(logits)
        if label not in (0.0, 1.0, 0, 1):
            raise GraphError(f"bce: label must be 0 or 1, got {label!r}")
        self.label = float(label)

    def _forward(self, t):
        return np.asarray((softplus(t) - self.label * t).mean())

    def _backward(self, g, t):
        return ((float(g) / t.size) * (sigmoid(t) - self.label),)


class GaussianKl(Node):
    """KL( N(mean, exp(logvar)) || N(0, 1) ), summed over latent dims and
    averaged over the batch (axis 0 of 2-D operands)."""

    op = "gaussian_kl"

    def _forward(self, mean, logvar):
        if mean.shape != logvar.shape:
            raise self._shape_error(f"mean {mean.shape} vs logvar {logvar.shape}")
        batch = mean.shape[0] if mean.ndim >= 2 else 1
        return np.asarray(0.5 * np.sum(mean**2 + np.exp(logvar) - 1.0 - logvar) / batch)

    def _backward(self, g, mean, logvar):
        batch = mean.shape[0] if mean.ndim >= 2 else 1
        coeff = float(g) / batch
        return coeff * mean, coeff * 0.5 * (np.exp(logvar) - 1.0)


class Reparameterize(Node):
    """z = mean + exp(0.5 * logvar) * epsilon; differentiable in mean, logvar."""

    op = "reparameterize"

    def _forward(self, mean, logvar, eps):
        if not (mean.shape == logvar.shape == eps.shape):
            raise self._shape_error(
                f"shapes differ: mean {mean.shape}, logvar {logvar.shape}, eps {eps.shape}"
            )
        return mean + np.exp(0.5 * logvar) * eps

    def _backward(self, g, mean, logvar, eps):
        std = np.exp(0.5 * logvar)
        return g, g * eps * 0.5 * std, g * std


#: op-kind name -> Node subclass, for introspection and per-op test sweeps
OP_KINDS = {
    cls.op: cls
    for cls in (
        Input, Constant, Param, Dense, DilatedCausalConv1d, LeakyRelu, Sigmoid,
        Tanh, Add, Affine, Clamp, Sum, Mean, Mse, Bce, GaussianKl, Reparameterize,
    )
}


def topo_order(root: Node) -> list[Node]:
    """Deterministic post-order of the DAG reachable from root (cached)."""
    if root._topo is not None:
        return root._topo
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inp in reversed(node.inputs):
            if id(inp) not in seen:
                stack.append((inp, False))
    root._topo = order
    return order


def _resolve_bindings(order: list[Node], bindings: dict | None) -> dict[Input, np.ndarray]:
    by_name: dict[str, np.ndarray] = {}
    by_node: dict[Input, np.ndarray] = {}
    for key, val in (bindings or {}).items():
        if isinstance(key, Input):
            by_node[key] = _as_f64(val)
        elif isinstance(key, str):
            by_name[key] = _as_f64(val)
        else:
            raise GraphError(f"binding keys must be Input nodes or names, got {type(key)!r}")
    resolved: dict[Input, np.ndarray] = {}
    for node in order:
        if isinstance(node, Input):
            if node in by_node:
                resolved[node] = by_node[node]
            elif node.name in by_name:
                resolved[node] = by_name[node.name]
            else:
                raise UnboundInputError(f"no binding for input '{node.name}'")
    return resolved


def forward(root: Node, bindings: dict | None = None) -> np.ndarray:
    """Evaluate the DAG under the given input bindings and return root.value.

    All intermediate values stay cached on the nodes for backward(). The
    resolved bindings are stashed on the root so grad_check can re-run the
    same forward while perturbing a parameter.
    """
    order = topo_order(root)
    resolved = _resolve_bindings(order, bindings)
    for node in order:
        if isinstance(node, Input):
            node.value = resolved[node]
        elif isinstance(node, (Constant, Param)):
            pass
        else:
            node.value = node._forward(*(inp.value for inp in node.inputs))
    root._bindings = resolved
    return root.value


def backward(root: Node) -> None:
    """Reverse-mode sweep from a scalar root; fills grad on every ancestor."""
    if root.value is None:
        raise GraphError("backward called before forward")
    if root.value.size != 1:
        raise NonScalarRootError(f"root must be scalar, has shape {root.value.shape}")
    order = topo_order(root)
    for node in order:
        if node.value is None:
            raise GraphError(f"{node._label()}: no cached value; run forward first")
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if not node.inputs:
            continue
        grads = node._backward(node.grad, *(inp.value for inp in node.inputs))
        for inp, g in zip(node.inputs, grads):
            if g is not None:
                inp.grad += g


def grad_check(root: Node, param: Param, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per component is |analytic - numeric| / max(1, |analytic|).
    Uses the bindings stashed by the most recent forward(); leaves the param
    and the cached values exactly as found.
    """
    if not 1e-6 <= step <= 1e-3:
        raise GraphError(f"grad_check: step must be in [1e-6, 1e-3], got {step}")
    bindings = root._bindings if root._bindings is not None else {}
    forward(root, bindings)
    backward(root)
    analytic = param.grad.copy()
    flat = param.value.reshape(-1)
    numeric = np.zeros_like(analytic).reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = float(forward(root, bindings))
        flat[i] = orig - step
        f_minus = float(forward(root, bindings))
        flat[i] = orig
        numeric[i] = (f_plus - f_minus) / (2.0 * step)
    forward(root, bindings)
    numeric = numeric.reshape(analytic.shape)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
