"""
core/optim.py
-------------
Otimizador Adam para parâmetros do core.numcore.

Atualiza `param.data` no lugar, preservando o dtype do perfil de precisão.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from core.errors import ParameterError
from core.numcore import Tensor


def global_grad_norm(params: Sequence[Tensor]) -> float:
    """Norma L2 do vetor formado por todos os gradientes."""
    return math.sqrt(math.fsum(float(np.sum(np.square(p.grad, dtype=np.float64))) for p in params))


class Adam:
    """Adaptive moment estimation (Kingma & Ba) com clipping global opcional."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        clip_norm: float | None = None,
    ):
        params = list(params)
        if not params:
            raise ParameterError("Adam recebeu lista vazia de parâmetros")
        if any(not p.requires_grad for p in params):
            raise ParameterError("Adam só aceita parâmetros com requires_grad=True")
        if lr <= 0:
            raise ParameterError(f"learning rate deve ser positivo (recebido {lr})")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm if clip_norm else None
        self.steps = 0
        self._m = [np.zeros_like(p.data) for p in params]
        self._v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        scale = 1.0
        if self.clip_norm is not None:
            norm = global_grad_norm(self.params)
            if norm > self.clip_norm:
                scale = self.clip_norm / (norm + 1e-12)

        self.steps += 1
        bias1 = 1.0 - self.beta1 ** self.steps
        bias2 = 1.0 - self.beta2 ** self.steps
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad * scale if scale != 1.0 else p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)).astype(p.data.dtype)

