from .autodiff import Tensor, no_grad
from .params import Adam, ParameterSet, load_checkpoint, save_checkpoint
from .layers import (
    conv_encoder,
    gat_cross_layer,
    gat_self_layer,
    mlp,
    sinkhorn,
    sinkhorn_log,
)


def grad(loss_fn, params: ParameterSet) -> dict:
    """Gradients of the scalar returned by ``loss_fn()`` with respect to every parameter."""
    params.zero_grad()
    loss = loss_fn()
    loss.backward()
    out = params.grads()
    params.zero_grad()
    return out


__all__ = [
    "Adam",
    "ParameterSet",
    "Tensor",
    "conv_encoder",
    "gat_cross_layer",
    "gat_self_layer",
    "grad",
    "load_checkpoint",
    "mlp",
    "no_grad",
    "save_checkpoint",
    "sinkhorn",
    "sinkhorn_log",
]
