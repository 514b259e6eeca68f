"""Central finite-difference checks of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParameterSet

# entries whose gradients are both below this are compared absolutely
REL_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    entries: int
    worst: str

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def check_gradients(
    name: str,
    loss_fn,
    params: ParameterSet,
    h: float = 1e-5,
    per_tensor: int = 6,
    names=None,
    seed: int = 0,
) -> GradCheckResult:
    """Compare backprop gradients with central differences on sampled entries.

    ``loss_fn()`` must return a scalar tensor and depend on ``params``.
    """
    params.zero_grad()
    loss = loss_fn()
    loss.backward()
    grads = params.grads()
    params.zero_grad()
    rng = np.random.default_rng(seed)
    worst, worst_at, count = 0.0, "", 0
    for pname in names or params.names():
        t = params[pname]
        flat = t.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        for idx in picks:
            old = flat[idx]
            flat[idx] = old + h
            up = loss_fn().item()
            flat[idx] = old - h
            down = loss_fn().item()
            flat[idx] = old
            num = (up - down) / (2 * h)
            err = relative_error(float(grads[pname].reshape(-1)[idx]), num)
            count += 1
            if err > worst:
                worst, worst_at = err, f"{pname}[{idx}]"
    return GradCheckResult(name, worst, count, worst_at)
