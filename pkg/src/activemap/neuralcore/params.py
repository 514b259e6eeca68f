"""Named parameter collections, checkpoint I/O and the Adam optimiser."""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import NumericError, ShapeError
from .autodiff import Tensor

CHECKPOINT_TAG = "ACTIVEMAP-PARAMS 1"


class CheckpointError(ValueError):
    pass


class ParameterSet:
    """Ordered mapping from parameter name to a leaf :class:`Tensor`."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericError(f"parameter {name!r} is not finite")
        t = Tensor(value.copy(), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for k, t in self._params.items()}

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state(self, state: dict):
        for k, t in self._params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != t.shape:
                raise ShapeError(f"{k}: checkpoint shape {v.shape} != {t.shape}")
            t.data = v.copy()

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for k, t in self._params.items():
            out.add(k, t.data)
        return out

    def save(self, path):
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "ParameterSet":
        return load_checkpoint(path)


def save_checkpoint(params: ParameterSet, path):
    """Write a version line, a ``name shape`` manifest, then little-endian float64 data."""
    lines = [CHECKPOINT_TAG, f"tensors {len(params)}"]
    for name, t in params.items():
        if any(ch.isspace() for ch in name):
            raise CheckpointError(f"parameter name {name!r} contains whitespace")
        lines.append(f"{name} {'x'.join(str(d) for d in t.shape) or 'scalar'}")
    lines.append("data")
    header = ("\n".join(lines) + "\n").encode("ascii")
    body = b"".join(t.data.astype("<f8").tobytes() for _, t in params.items())
    Path(path).write_bytes(header + body)


def load_checkpoint(path) -> ParameterSet:
    raw = Path(path).read_bytes()
    pos = 0

    def line():
        nonlocal pos
        end = raw.index(b"\n", pos)
        s = raw[pos:end].decode("ascii")
        pos = end + 1
        return s

    if line() != CHECKPOINT_TAG:
        raise CheckpointError("unrecognised checkpoint version tag")
    head = line().split()
    if len(head) != 2 or head[0] != "tensors":
        raise CheckpointError("malformed tensor count line")
    manifest = []
    for _ in range(int(head[1])):
        name, shape = line().rsplit(" ", 1)
        dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
        manifest.append((name, dims))
    if line() != "data":
        raise CheckpointError("missing data marker")
    ps = ParameterSet()
    for name, dims in manifest:
        n = int(np.prod(dims)) if dims else 1
        chunk = raw[pos : pos + 8 * n]
        if len(chunk) != 8 * n:
            raise CheckpointError(f"truncated data for {name}")
        ps.add(name, np.frombuffer(chunk, dtype="<f8").reshape(dims))
        pos += 8 * n
    if pos != len(raw):
        raise CheckpointError("trailing bytes after tensor data")
    return ps


class Adam:
    def __init__(self, params: ParameterSet, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8, max_grad_norm=None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> float:
        """Apply one update from ``grads`` (gradients of a loss to minimise).  Returns the grad norm."""
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        if not np.isfinite(norm):
            raise NumericError("non-finite gradient")
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / norm
        self.t += 1
        for k, t in self.params.items():
            g = grads[k] * scale
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            t.data = t.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return norm
