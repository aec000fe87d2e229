"""Adam optimizer (beta1=0.9, beta2=0.99, bias-corrected, in-place)."""

from dataclasses import dataclass, field

import numpy as np

from cameranet.errors import NonFiniteError, ValidationError


@dataclass
class AdamState:
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps_hat: float = 1e-8


def adam_init(params, beta1=0.9, beta2=0.99, eps_hat=1e-8):
    """Fresh zero-moment state for a name -> Tensor mapping."""
    return AdamState(
        first_moment={n: np.zeros_like(p.data) for n, p in params.items()},
        second_moment={n: np.zeros_like(p.data) for n, p in params.items()},
        step_count=0, beta1=beta1, beta2=beta2, eps_hat=eps_hat)


def adam_step(params, state, lr):
    """One bias-corrected Adam update over every parameter with a gradient.

    Parameters whose .grad is None are left untouched. Mutates params and
    state in place; increments step_count by exactly 1.
    """
    if lr <= 0:
        raise ValidationError("adam_step: lr must be positive")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ValidationError(
                f"adam_step: gradient shape {g.shape} != parameter shape "
                f"{p.data.shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)).astype(
            p.data.dtype)
