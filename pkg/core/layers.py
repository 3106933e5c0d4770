"""
core/layers.py
--------------
Blocos de rede construídos sobre core.numcore:

- Module        : base com coleta de parâmetros, cópia e zero_grad
- LinearLayer   : x·W + b
- MLP           : camadas lineares com dropout / layer norm / ReLU opcionais
- MhaLayer      : multi-head self-attention sem codificação posicional
- ResidualBlock : x + inner(x)

Pesos inicializados uniformes em ±1/sqrt(fan_in).
"""

from __future__ import annotations

import copy
import math
from typing import Iterator

import numpy as np

from core import numcore as nc
from core.errors import DimensionError, EmptySequenceError, ParameterError
from core.numcore import Tensor

ATTENTION_SCALES = ("per_head", "full_model")


# ----------------------------------------------------------------------
# Base
# ----------------------------------------------------------------------
class Module:
    """Base das camadas: parâmetros são atributos Tensor (ou listas de Module)."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"Parâmetros ausentes no estado: {missing}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise DimensionError(f"{name}: shape {value.shape} != {p.shape}")
            p.data[...] = value

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def clone(self, requires_grad: bool | None = None) -> "Module":
        """Cópia profunda; opcionalmente liga/desliga o rastreamento dos parâmetros."""
        twin = copy.deepcopy(self)
        if requires_grad is not None:
            for p in twin.parameters():
                p.requires_grad = requires_grad
                p.grad = np.zeros_like(p.data) if requires_grad else None
        return twin

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None):
        return self.forward(x, training=training, rng=rng)

    def forward(self, x, training: bool = False, rng=None):
        raise NotImplementedError


def _uniform(rng: np.random.Generator, shape, fan_in: int, name: str) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


# ----------------------------------------------------------------------
# Linear
# ----------------------------------------------------------------------
class LinearLayer(Module):
    """Camada totalmente conectada: weight [in×out], bias [out]."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = _uniform(rng, (in_dim, out_dim), in_dim, "weight")
        self.bias = _uniform(rng, (out_dim,), in_dim, "bias") if bias else None

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        return linear_forward(self, x)


def linear_forward(layer: LinearLayer, x) -> Tensor:
    x = nc.as_tensor(x)
    if x.shape[-1] != layer.in_dim:
        raise DimensionError(
            f"linear: entrada com {x.shape[-1]} features, camada espera {layer.in_dim} (shape {x.shape})"
        )
    out = nc.matmul(x, layer.weight)
    if layer.bias is not None:
        out = out + layer.bias
    return out


# ----------------------------------------------------------------------
# MLP
# ----------------------------------------------------------------------
class MLP(Module):
    """
    Sequência de camadas ocultas com ReLU.

    Com dropout_rate > 0 e/ou layer_norm=True cada camada oculta segue a
    ordem linear -> dropout -> layer_norm -> ReLU.
    """

    def __init__(
        self,
        sizes: list[int],
        rng: np.random.Generator,
        dropout_rate: float = 0.0,
        layer_norm: bool = False,
    ):
        if len(sizes) < 2:
            raise ParameterError(f"MLP precisa de ao menos entrada e saída (sizes={sizes})")
        self.dropout_rate = dropout_rate
        self.use_layer_norm = layer_norm
        self.layers = [LinearLayer(i, o, rng) for i, o in zip(sizes[:-1], sizes[1:])]
        self.norms = [LayerNorm(o) for o in sizes[1:]] if layer_norm else []

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if self.dropout_rate > 0.0:
                x = nc.dropout(x, self.dropout_rate, training, rng)
            if self.use_layer_norm:
                x = self.norms[i](x)
            x = nc.relu(x)
        return x


class LayerNorm(Module):
    """gain/bias aprendidos para core.numcore.layer_norm."""

    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim), requires_grad=True, name="gain")
        self.bias = Tensor(np.zeros(dim), requires_grad=True, name="bias")

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        return nc.layer_norm(x, self.gain, self.bias)


# ----------------------------------------------------------------------
# Multi-head self-attention
# ----------------------------------------------------------------------
class MhaLayer(Module):
    """
    Self-attention com H cabeças sobre uma sequência de tokens [.., L, d_model].

    wq/wk/wv guardam as projeções de todas as cabeças lado a lado:
    a cabeça i usa as colunas [i*d_head, (i+1)*d_head). São projeções
    distintas por cabeça, apenas armazenadas num único array.
    w é a projeção de saída aplicada à concatenação das cabeças.
    """

    def __init__(
        self,
        d_model: int,
        num_heads: int,
        rng: np.random.Generator,
        attention_scale: str = "per_head",
    ):
        if num_heads < 1 or d_model % num_heads != 0:
            raise ParameterError(f"d_model ({d_model}) deve ser divisível por H ({num_heads}) e H >= 1")
        if attention_scale not in ATTENTION_SCALES:
            raise ParameterError(f"attention_scale inválido: {attention_scale!r} (use {ATTENTION_SCALES})")
        self.d_model = d_model
        self.num_heads = num_heads
        self.d_head = d_model // num_heads
        self.attention_scale = attention_scale
        self.wq = _uniform(rng, (d_model, d_model), d_model, "wq")
        self.wk = _uniform(rng, (d_model, d_model), d_model, "wk")
        self.wv = _uniform(rng, (d_model, d_model), d_model, "wv")
        self.w = _uniform(rng, (d_model, d_model), d_model, "w")

    @property
    def scale(self) -> float:
        width = self.d_head if self.attention_scale == "per_head" else self.d_model
        return math.sqrt(width)

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        return mha_forward(self, x)


def _split_heads(x: Tensor, num_heads: int) -> Tensor:
    """[.., L, d] -> [.., H, L, d_head]"""
    *lead, length, width = x.shape
    x = nc.reshape(x, (*lead, length, num_heads, width // num_heads))
    n = len(lead)
    axes = list(range(n)) + [n + 1, n, n + 2]
    return nc.transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    """[.., H, L, d_head] -> [.., L, H*d_head]"""
    *lead, heads, length, width = x.shape
    n = len(lead)
    axes = list(range(n)) + [n + 1, n, n + 2]
    x = nc.transpose(x, axes)
    return nc.reshape(x, (*lead, length, heads * width))


def mha_attention(layer: MhaLayer, tokens) -> tuple[Tensor, Tensor]:
    """Retorna (saída [.., L, d_model], pesos de atenção [.., H, L, L])."""
    tokens = nc.as_tensor(tokens)
    if tokens.ndim < 2:
        raise DimensionError(f"mha: tokens devem ter shape [.., L, d_model] (recebido {tokens.shape})")
    if tokens.shape[-2] == 0:
        raise EmptySequenceError("mha: sequência de tokens vazia (L = 0)")
    if tokens.shape[-1] != layer.d_model:
        raise DimensionError(f"mha: largura {tokens.shape[-1]} != d_model {layer.d_model}")

    q = _split_heads(nc.matmul(tokens, layer.wq), layer.num_heads)
    k = _split_heads(nc.matmul(tokens, layer.wk), layer.num_heads)
    v = _split_heads(nc.matmul(tokens, layer.wv), layer.num_heads)

    k_t = nc.transpose(k, list(range(k.ndim - 2)) + [k.ndim - 1, k.ndim - 2])
    scores = nc.matmul(q, k_t) * (1.0 / layer.scale)
    weights = nc.row_softmax(scores)
    heads = nc.matmul(weights, v)
    return nc.matmul(_merge_heads(heads), layer.w), weights


def mha_forward(layer: MhaLayer, tokens) -> Tensor:
    return mha_attention(layer, tokens)[0]


# ----------------------------------------------------------------------
# Conexão identidade
# ----------------------------------------------------------------------
class ResidualBlock(Module):
    """x + inner(x); inner precisa preservar o shape."""

    def __init__(self, inner):
        self.inner = inner

    def forward(self, x, training: bool = False, rng=None) -> Tensor:
        return residual_forward(self, x, training=training, rng=rng)


def residual_forward(block: ResidualBlock, x, training: bool = False, rng=None) -> Tensor:
    x = nc.as_tensor(x)
    y = block.inner(x, training=training, rng=rng)
    if y.shape != x.shape:
        raise DimensionError(f"residual: inner mudou o shape {x.shape} -> {y.shape}")
    return x + y
