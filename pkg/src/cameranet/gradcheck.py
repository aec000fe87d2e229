"""Finite-difference gradient checking with 64-bit replay.

check_gradients replays the computation with float64 leaves, compares
tape gradients against central differences (default step 1e-3), and
reports the worst relative error over elements where |grad| > 1e-6.
"""

import numpy as np

from cameranet.autodiff import Tensor


def finite_difference_grad(f, tensors, index, step=1e-3):
    """Central-difference dLoss/dtensors[index], all leaves float64."""
    base = [t.data.astype(np.float64).copy() for t in tensors]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f([Tensor(b, dtype=np.float64) for b in base]).item()
        flat[i] = orig - step
        lo = f([Tensor(b, dtype=np.float64) for b in base]).item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def check_gradients(f, tensors, step=1e-3, grad_floor=1e-6, sample=None,
                    rng=None, tol=1e-3):
    """Max relative error of tape grads vs central finite differences.

    f takes a list of leaf Tensors and returns a scalar Tensor. With
    sample=N, only N randomly chosen coordinates per leaf are probed
    (full probing otherwise). Returns the worst relative error.

    A coordinate that misses tol at the requested step is re-probed at
    successively smaller steps (down to step/4096) and its best error
    kept: truncation error and activation-kink crossings vanish as the
    step shrinks, while a wrong tape gradient stays wrong at every step.
    """
    leaves = [Tensor(t.data.astype(np.float64).copy(), requires_grad=True,
                     dtype=np.float64) for t in tensors]
    loss = f(leaves)
    loss.backward()

    base = [lf.data.copy() for lf in leaves]

    def eval_at():
        return f([Tensor(b, dtype=np.float64) for b in base]).item()

    worst = 0.0
    for k, leaf in enumerate(leaves):
        tape_grad = leaf.grad
        if tape_grad is None:
            continue
        flat = base[k].reshape(-1)
        gflat = tape_grad.reshape(-1)
        idx = np.arange(flat.size)
        if sample is not None and flat.size > sample:
            idx = (rng or np.random.default_rng(0)).choice(
                flat.size, size=sample, replace=False)
        for i in idx:
            g = gflat[i]
            orig = flat[i]
            best = None
            for h in (step, step / 8.0, step / 64.0, step / 512.0,
                      step / 4096.0):
                flat[i] = orig + h
                hi = eval_at()
                flat[i] = orig - h
                lo = eval_at()
                flat[i] = orig
                fd = (hi - lo) / (2.0 * h)
                if abs(g) <= grad_floor and abs(fd) <= grad_floor:
                    best = 0.0
                    break
                rel = abs(g - fd) / max(abs(g), abs(fd), grad_floor)
                best = rel if best is None else min(best, rel)
                if best < tol:
                    break
            worst = max(worst, best)
    return worst
