# dpmn/diffcore/optim.py
'''Adam with bias correction'''

from typing import Sequence

import numpy as np

from dpmn.diffcore.module import Parameter


def adam_step(
        params: Sequence[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update per parameter, then zero its grad."""
    for param in params:
        if param.frozen:
            continue
        grad = param.node.grad
        param.step_count += 1
        t = param.step_count
        param.adam_m *= beta1
        param.adam_m += (1.0 - beta1) * grad
        param.adam_v *= beta2
        param.adam_v += (1.0 - beta2) * grad * grad
        m_hat = param.adam_m / (1.0 - beta1 ** t)
        v_hat = param.adam_v / (1.0 - beta2 ** t)
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        param.node.values -= update.astype(param.node.values.dtype)
        param.node.zero_grad()


class Adam:
    def __init__(
            self,
            params: Sequence[Parameter],
            lr: float = 1e-3,
            beta1: float = 0.9,
            beta2: float = 0.999,
            eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self) -> None:
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for param in self.params:
            param.node.zero_grad()

    def grads_finite(self) -> bool:
        return all(np.all(np.isfinite(p.node.grad)) for p in self.params)
