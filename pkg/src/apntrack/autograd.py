"""Reverse-mode autodiff over dense (batch, channel, height, width) arrays.

Covers exactly the operations the tracking network needs: convolution,
depthwise cross-correlation, channel concatenation, pointwise
activations, and the scalar arithmetic used to combine losses. All
storage and accumulation is float64.

Non-finite values are rejected at tensor construction; with
``set_debug_checks(True)`` gradients are additionally validated after
every backward pass.
"""

import numpy as np

from . import kernels
from .errors import ShapeError

_debug_checks = False


def set_debug_checks(enabled):
    """Toggle post-backward finiteness checks on all touched gradients."""
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    """A dense array plus optional gradient and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise ValueError("tensor values must be finite")
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(data) if requires_grad else None
        self._parents = ()
        self._backward_fn = None

    @classmethod
    def _from_op(cls, data, parents, backward_fn):
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out.grad = None
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def backward(self):
        """Populate gradients of every reachable requires-grad leaf.

        The root must be a scalar. Repeated calls accumulate into leaf
        gradients; call zero_grad between steps.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar root, got shape {self.shape}")

        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            gy = pending.pop(id(node), None)
            if gy is None:
                continue
            if node._backward_fn is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += gy
                continue
            for parent, g in zip(node._parents, node._backward_fn(gy)):
                if g is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + g
                else:
                    pending[key] = g

        if _debug_checks:
            for node in topo:
                if node.grad is not None and not np.all(np.isfinite(node.grad)):
                    raise FloatingPointError("non-finite gradient after backward")

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data):
    return Tensor(data, requires_grad=True)


def conv2d(x, w, b, stride=1, padding=0):
    """2-D cross-correlation with per-output-channel bias."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"channel mismatch: input {x.shape} vs kernel {w.shape}")
    if w.shape[0] != b.shape[0]:
        raise ShapeError(f"bias size {b.shape} does not match kernel {w.shape}")
    try:
        kernels.conv_output_size(x.shape[2], w.shape[2], stride, padding)
        kernels.conv_output_size(x.shape[3], w.shape[3], stride, padding)
    except ValueError as exc:
        raise ShapeError(f"input {x.shape} with kernel {w.shape}: {exc}") from exc

    y = kernels.conv2d_forward(x.data, w.data, b.data, stride, padding)

    def backward_fn(gy):
        gx, gw, gb = kernels.conv2d_backward(
            x.data, w.data, stride, padding, gy,
            need_gx=x.requires_grad, need_gw=w.requires_grad,
        )
        return gx, gw, gb

    return Tensor._from_op(y, (x, w, b), backward_fn)


def dw_xcorr(search, template):
    """Per-channel valid cross-correlation of template over search."""
    if search.shape[0] != template.shape[0] or search.shape[1] != template.shape[1]:
        raise ShapeError(
            f"batch/channel mismatch: search {search.shape} vs template {template.shape}"
        )
    if search.shape[2] < template.shape[2] or search.shape[3] < template.shape[3]:
        raise ShapeError(
            f"template {template.shape} larger than search {search.shape}"
        )

    y = kernels.dwxcorr_forward(search.data, template.data)

    def backward_fn(gy):
        return kernels.dwxcorr_backward(search.data, template.data, gy)

    return Tensor._from_op(y, (search, template), backward_fn)


def concat_channels(a, b):
    """Concatenate along the channel axis; a occupies the leading channels."""
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"batch/spatial mismatch: {a.shape} vs {b.shape}")
    y = np.concatenate([a.data, b.data], axis=1)
    split = a.shape[1]

    def backward_fn(gy):
        return gy[:, :split], gy[:, split:]

    return Tensor._from_op(y, (a, b), backward_fn)


def relu(x):
    y = np.maximum(x.data, 0.0)

    def backward_fn(gy):
        return (gy * (x.data > 0.0),)

    return Tensor._from_op(y, (x,), backward_fn)


def sigmoid(x):
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def backward_fn(gy):
        return (gy * y * (1.0 - y),)

    return Tensor._from_op(y, (x,), backward_fn)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward_fn(gy):
        return gy, gy

    return Tensor._from_op(a.data + b.data, (a, b), backward_fn)


def mul(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def backward_fn(gy):
        return gy * b.data, gy * a.data

    return Tensor._from_op(a.data * b.data, (a, b), backward_fn)


def scale(x, c):
    c = float(c)

    def backward_fn(gy):
        return (gy * c,)

    return Tensor._from_op(x.data * c, (x,), backward_fn)


def tensor_sum(x):
    """Sum of all elements as a scalar tensor."""

    def backward_fn(gy):
        return (np.full_like(x.data, float(gy)),)

    return Tensor._from_op(np.asarray(x.data.sum()), (x,), backward_fn)
