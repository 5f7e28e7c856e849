from __future__ import annotations

import numpy as np

from .tensor import DetachLog, Tensor, detach_log, no_grad


def _analytic_grads(scalar_fn, inputs):
    for t in inputs:
        t.grad = None
    out = scalar_fn(*inputs)
    if out.data.size != 1:
        raise ValueError(f"finite_diff_check: function returned shape {out.shape}, need a scalar")
    out.backward()
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def finite_diff_check(scalar_fn, input, h=1e-5, coords=None, grad_hook=None,
                      freeze_detached=False, floor=1e-8):
    """Max relative error between tape gradients and central differences.

    ``input`` is a leaf tensor or a list of them; ``scalar_fn(*inputs)`` must
    return a scalar tensor. Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``. ``coords`` optionally restricts the
    numeric sweep to ``{input_position: flat_indices}``. ``grad_hook`` lets a
    caller tamper with the analytic gradients (negative controls).

    With ``freeze_detached`` every ``detach()`` result is recorded during the
    analytic pass and replayed during the numeric ones, so stop-gradient
    operands count as constants, exactly as the tape treats them.
    """
    inputs = [input] if isinstance(input, Tensor) else list(input)
    for t in inputs:
        t.requires_grad = True
        t.data = np.ascontiguousarray(t.data)
    log = DetachLog() if freeze_detached else None
    if log is None:
        analytic = _analytic_grads(scalar_fn, inputs)
    else:
        with detach_log(log):
            analytic = _analytic_grads(scalar_fn, inputs)

    def evaluate():
        if log is None:
            return float(scalar_fn(*inputs).data)
        with detach_log(log, replay=True):
            return float(scalar_fn(*inputs).data)

    if grad_hook is not None:
        analytic = grad_hook(analytic)
    worst = 0.0
    with no_grad():
        for pos, t in enumerate(inputs):
            flat = t.data.reshape(-1)
            todo = range(flat.size) if coords is None else coords.get(pos, ())
            for i in todo:
                orig = flat[i]
                flat[i] = orig + h
                fp = evaluate()
                flat[i] = orig - h
                fm = evaluate()
                flat[i] = orig
                num = (fp - fm) / (2 * h)
                a = float(analytic[pos].reshape(-1)[i])
                err = abs(a - num) / max(abs(a), abs(num), floor)
                worst = max(worst, err)
    return worst
