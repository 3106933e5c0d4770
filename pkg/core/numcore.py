"""
core/numcore.py
---------------
Núcleo numérico do laboratório: tensores densos (numpy) com
diferenciação automática em modo reverso.

Funcionamento:
- Toda operação entre tensores devolve um novo Tensor.
- Se existir uma Tape ativa na thread e algum operando tiver
  requires_grad=True, a operação é gravada na Tape junto com a
  função que propaga o gradiente.
- Tape.backward(loss) percorre a gravação em ordem reversa exata
  e acumula (+=) os gradientes nos buffers `grad`.
- Fora de uma Tape nada é gravado: alvos (targets) e avaliações
  ficam naturalmente desligados do grafo.

Dois perfis de precisão:
- fast  -> float32 (treino)
- check -> float64 (verificação de gradiente por diferenças finitas)

Qualquer NaN/Inf produzido por uma operação gera NumericError.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from core.errors import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    NumericError,
    ParameterError,
    StateError,
)

PRECISION_PROFILES = {"fast": np.float32, "check": np.float64}
LAYER_NORM_EPS = 1e-5

# Estado por thread: perfil de precisão e pilha de Tapes ativas
_local = threading.local()


# ----------------------------------------------------------------------
# Perfis de precisão
# ----------------------------------------------------------------------
def get_dtype():
    """Retorna o dtype do perfil ativo nesta thread (padrão: fast)."""
    return getattr(_local, "dtype", np.float32)


def set_precision(profile: str) -> None:
    """Define o perfil de precisão da thread atual ('fast' ou 'check')."""
    if profile not in PRECISION_PROFILES:
        raise ParameterError(
            f"Perfil de precisão inválido: {profile!r} (use um de {sorted(PRECISION_PROFILES)})"
        )
    _local.dtype = PRECISION_PROFILES[profile]


@contextmanager
def precision(profile: str):
    """Ativa um perfil de precisão apenas dentro do bloco `with`."""
    previous = get_dtype()
    set_precision(profile)
    try:
        yield
    finally:
        _local.dtype = previous


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def current_tape() -> "Tape | None":
    """Tape mais interna ativa nesta thread, ou None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad():
    """Suspende a gravação dentro do bloco, mesmo com uma Tape ativa."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


# ----------------------------------------------------------------------
# Tensor
# ----------------------------------------------------------------------
class Tensor:
    """
    Array denso com participação opcional na Tape.

    O buffer `grad` existe se e somente se requires_grad=True
    e tem sempre o mesmo shape de `data`.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")
    __array_ufunc__ = None  # faz o numpy delegar `ndarray op Tensor` para o Tensor

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=get_dtype())
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._tape = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = np.zeros_like(data) if requires_grad else None
        t.name = None
        t._tape = None
        return t

    # -- propriedades -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() exige tensor de um elemento; shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def backward(self) -> None:
        backward(self)

    # -- operadores ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)


def as_tensor(value) -> Tensor:
    """Converte escalares/arrays em Tensor constante (sem gradiente)."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# ----------------------------------------------------------------------
# Tape
# ----------------------------------------------------------------------
class Tape:
    """
    Registro ordenado das operações primitivas de um passo forward.

    Uso:
        with Tape() as tape:
            loss = ...
        backward(loss)

    Uma Tape é consumida uma única vez pelo backward.
    """

    def __init__(self):
        self._records: list[tuple[str, Tensor, tuple[Tensor, ...], Callable]] = []
        self._consumed = False
        self.replayed: list[str] = []  # nomes das ops na ordem em que o backward as visitou

    def __enter__(self) -> "Tape":
        if self._consumed:
            raise StateError("Tape já consumida: crie uma nova Tape para um novo forward.")
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        elif self in stack:
            stack.remove(self)
        return False

    def __len__(self) -> int:
        return len(self._records)

    @property
    def ops(self) -> list[str]:
        """Nomes das operações gravadas, em ordem de gravação."""
        return [rec[0] for rec in self._records]

    @property
    def consumed(self) -> bool:
        return self._consumed

    def _record(self, op: str, out: Tensor, inputs: tuple[Tensor, ...], fn: Callable) -> None:
        if self._consumed:
            raise StateError("Tentativa de gravar operação em Tape já consumida.")
        self._records.append((op, out, inputs, fn))

    def backward(self, loss: Tensor) -> None:
        """Propaga d(loss)/d(x) para todo tensor rastreado da Tape."""
        if self._consumed:
            raise StateError("backward duplo: esta Tape já foi consumida.")
        if loss.data.size != 1:
            raise ContractError(f"backward exige loss escalar; shape recebido {loss.shape}")
        if not loss.requires_grad or loss._tape is not self:
            raise ContractError("loss não está conectada a esta Tape (nenhum parâmetro rastreado).")

        self._consumed = True
        loss.grad[...] += 1
        for op, out, inputs, fn in reversed(self._records):
            self.replayed.append(op)
            grads = fn(out.grad)
            for t, g in zip(inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                t.grad += _unbroadcast(np.asarray(g), t.data.shape)
        self._records.clear()


def backward(loss: Tensor) -> None:
    """Executa o backward da Tape que produziu `loss`."""
    if loss.data.size != 1:
        raise ContractError(f"backward exige loss escalar; shape recebido {loss.shape}")
    if loss._tape is None:
        raise ContractError("loss não foi gravada em nenhuma Tape (nada a diferenciar).")
    loss._tape.backward(loss)


# ----------------------------------------------------------------------
# Utilidades internas
# ----------------------------------------------------------------------
def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NumericError(f"{op}: valores não finitos (NaN/Inf) detectados")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Soma o gradiente sobre os eixos que sofreram broadcast."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(op: str, data, inputs: tuple[Tensor, ...], fn: Callable) -> Tensor:
    data = np.asarray(data)
    _check_finite(data, op)
    tape = current_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, track)
    if track:
        tape._record(op, out, inputs, fn)
        out._tape = tape
    return out


# ----------------------------------------------------------------------
# Aritmética elementar (com broadcast)
# ----------------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data
    return _result(
        "div", data, (a, b), lambda g: (g / b.data, -g * a.data / (b.data * b.data))
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result("neg", -a.data, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _result("square", a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)
    return _result("exp", data, (a,), lambda g: (g * data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return _result("log", data, (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _result("tanh", data, (a,), lambda g: (g * (1.0 - data * data),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result("relu", np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def softplus(a) -> Tensor:
    """log(1 + e^x), estável para |x| grande."""
    a = as_tensor(a)
    data = np.logaddexp(0, a.data)
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result("softplus", data, (a,), lambda g: (g * sig,))


def clip(a, low: float, high: float) -> Tensor:
    """Limita valores a [low, high]; gradiente zero fora do intervalo."""
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)
    return _result("clip", np.clip(a.data, low, high), (a,), lambda g: (g * inside,))


# ----------------------------------------------------------------------
# Álgebra linear e reduções
# ----------------------------------------------------------------------
def matmul(a, b) -> Tensor:
    """Produto matricial [.., m×k]·[.., k×n]; eixos iniciais em broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: dimensões incompatíveis {a.shape} · {b.shape}")

    def fn(g):
        return (g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g)

    return _result("matmul", a.data @ b.data, (a, b), fn)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _result("sum", data, (a,), fn)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(data.size, 1)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape),)

    return _result("mean", data, (a,), fn)


def reduce_min(a, axis: int) -> Tensor:
    """Mínimo ao longo de um eixo; gradiente vai para o primeiro argmin."""
    a = as_tensor(a)
    idx = np.expand_dims(np.argmin(a.data, axis=axis), axis)
    data = np.take_along_axis(a.data, idx, axis=axis).squeeze(axis)

    def fn(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, idx, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _result("min", data, (a,), fn)


# ----------------------------------------------------------------------
# Forma (reshape/transpose/concat/stack)
# ----------------------------------------------------------------------
def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return _result("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: shapes incompatíveis {shapes}") from e
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result("concat", data, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: shapes diferentes {sorted(shapes)}")
    data = np.stack([t.data for t in tensors], axis=axis)
    return _result(
        "stack", data, tensors, lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))
    )


# ----------------------------------------------------------------------
# Primitivas de rede: softmax, layer norm, dropout
# ----------------------------------------------------------------------
def row_softmax(x) -> Tensor:
    """Softmax ao longo do último eixo, com subtração do máximo."""
    x = as_tensor(x)
    _check_finite(x.data, "row_softmax")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def fn(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result("row_softmax", s, (x,), fn)


def layer_norm(x, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normaliza cada linha (último eixo) para média 0 / variância 1 e aplica gain/bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    if n < 2:
        raise DegenerateInputError(f"layer_norm exige ao menos 2 features por linha (recebido {n})")
    if gain.shape != (n,) or bias.shape != (n,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} não casam com ({n},)")

    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def fn(g):
        gxhat = g * gain.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return (gx, g * xhat, g)

    return _result("layer_norm", xhat * gain.data + bias.data, (x, gain, bias), fn)


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Dropout invertido: em treino escala os mantidos por 1/(1-rate); em avaliação é identidade."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout: rate deve estar em [0, 1) (recebido {rate})")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout em modo treino exige um gerador (rng) semeado")
    mask = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return _result("dropout", x.data * mask, (x,), lambda g: (g * mask,))


# ----------------------------------------------------------------------
# Verificação de gradiente
# ----------------------------------------------------------------------
def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-6,
    floor: float = 1e-3,
) -> float:
    """
    Compara gradientes analíticos (Tape) com diferenças finitas centrais.

    `loss_fn` deve ser determinística (semente fixa para dropout etc.).
    Retorna o maior erro relativo |a - n| / max(|a|, |n|, floor).
    """
    for p in params:
        p.zero_grad()
    with Tape():
        loss = loss_fn()
    backward(loss)

    worst = 0.0
    for p in params:
        analytic = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = float(loss_fn().data)
            flat[i] = original - step
            down = float(loss_fn().data)
            flat[i] = original
            numeric = (up - down) / (2.0 * step)
            err = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), floor)
            worst = max(worst, err)
    return worst
