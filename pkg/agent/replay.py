"""
agent/replay.py
---------------
Buffer de replay D, amostragem de mini-batches e sub-amostras
bootstrap b* (grupos de tokens para a atenção).

O buffer é um anel: ao encher, sobrescreve o mais antigo.
Um único escritor (thread do ambiente) e vários leitores; o Lock
garante que leitores nunca vejam uma transição pela metade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from threading import Lock

import numpy as np

from core.errors import ContractError, ParameterError, StateError

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Transition:
    """Um passo do ambiente (s, a, r, s', done)."""
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool  # término verdadeiro (truncamento por tempo NÃO conta)


@dataclass(frozen=True)
class Minibatch:
    """Mini-batch B amostrado do buffer (arrays alinhados por linha)."""
    indices: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class BootstrapGroup:
    """|b*| índices no mini-batch, sorteados com reposição (duplicatas permitidas)."""
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


class ReplayBuffer:
    """Armazena transições em arrays pré-alocados (anel de tamanho `capacity`)."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ParameterError(f"capacity deve ser >= 1 (recebido {capacity})")
        self._lock = Lock()
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._ptr = 0
        self._size = 0

        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        """Insere uma transição; sobrescreve a mais antiga quando cheio."""
        s = np.asarray(t.s, dtype=np.float64).reshape(-1)
        a = np.asarray(t.a, dtype=np.float64).reshape(-1)
        s_next = np.asarray(t.s_next, dtype=np.float64).reshape(-1)
        if s.shape != (self.state_dim,) or s_next.shape != (self.state_dim,) or a.shape != (self.action_dim,):
            raise ContractError(
                f"Transição com dimensões {s.shape}/{a.shape}/{s_next.shape}; "
                f"buffer espera state_dim={self.state_dim}, action_dim={self.action_dim}"
            )
        if not math.isfinite(t.r):
            raise ContractError(f"Recompensa não finita: {t.r}")
        with self._lock:
            idx = self._ptr
            self.states[idx] = s
            self.actions[idx] = a
            self.rewards[idx] = t.r
            self.next_states[idx] = s_next
            self.dones[idx] = bool(t.done)
            self._ptr = (self._ptr + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def get(self, index: int) -> Transition:
        """Lê a transição na posição `index` (0 = mais antiga ainda viva)."""
        with self._lock:
            if not 0 <= index < self._size:
                raise IndexError(f"Índice inválido: {index} (tamanho {self._size})")
            slot = (self._ptr - self._size + index) % self.capacity
            return Transition(
                self.states[slot].copy(), self.actions[slot].copy(), float(self.rewards[slot]),
                self.next_states[slot].copy(), bool(self.dones[slot]),
            )

    def take(self, slots: np.ndarray) -> Minibatch:
        with self._lock:
            return Minibatch(
                indices=slots,
                states=self.states[slots],
                actions=self.actions[slots],
                rewards=self.rewards[slots],
                next_states=self.next_states[slots],
                dones=self.dones[slots],
            )

    # ------------------------------------------------------------------
    # Snapshot em disco (.npz, little-endian)
    # ------------------------------------------------------------------
    def save(self, path: str) -> None:
        with self._lock:
            n = self._size
            order = (np.arange(n) + self._ptr - n) % self.capacity
            np.savez(
                path,
                version=np.array(SNAPSHOT_VERSION),
                capacity=np.array(self.capacity),
                states=self.states[order].astype("<f8"),
                actions=self.actions[order].astype("<f8"),
                rewards=self.rewards[order].astype("<f8"),
                next_states=self.next_states[order].astype("<f8"),
                dones=self.dones[order],
            )

    @classmethod
    def load(cls, path: str) -> "ReplayBuffer":
        with np.load(path) as archive:
            if int(archive["version"]) != SNAPSHOT_VERSION:
                raise ContractError(f"Snapshot com versão {int(archive['version'])} não suportada")
            states = archive["states"]
            buf = cls(int(archive["capacity"]), states.shape[1], archive["actions"].shape[1])
            n = states.shape[0]
            buf.states[:n] = states
            buf.actions[:n] = archive["actions"]
            buf.rewards[:n] = archive["rewards"]
            buf.next_states[:n] = archive["next_states"]
            buf.dones[:n] = archive["dones"]
            buf._size = n
            buf._ptr = n % buf.capacity
        return buf


# ----------------------------------------------------------------------
# Amostragem
# ----------------------------------------------------------------------
def sample_minibatch(buf: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> Minibatch:
    """`batch_size` transições uniformes, com reposição, entre as vivas."""
    size = len(buf)
    if size == 0:
        raise StateError("sample_minibatch: buffer vazio")
    if batch_size < 1:
        raise ParameterError(f"batch_size deve ser >= 1 (recebido {batch_size})")
    return buf.take(rng.integers(0, size, size=batch_size))


def group_count(batch_size: int, group_size: int, mode: str = "cover") -> int:
    """Número de grupos b* por atualização: ceil(|B|/|b*|) em `cover`, |B| em `per_element`."""
    if mode == "cover":
        return math.ceil(batch_size / group_size)
    if mode == "per_element":
        return batch_size
    raise ParameterError(f"groups_per_update inválido: {mode!r}")


def bootstrap_groups(
    batch: Minibatch | int,
    group_size: int,
    count: int | None,
    rng: np.random.Generator,
) -> list[BootstrapGroup]:
    """
    Sorteia `count` grupos de `group_size` índices no mini-batch, com reposição.
    count=None usa ceil(|B| / |b*|).
    """
    if group_size <= 0:
        raise ParameterError(f"group_size deve ser > 0 (recebido {group_size})")
    n = batch if isinstance(batch, int) else len(batch)
    if n < 1:
        raise ParameterError("bootstrap_groups: mini-batch vazio")
    if count is None:
        count = group_count(n, group_size)
    draws = rng.integers(0, n, size=(count, group_size))
    return [BootstrapGroup(row) for row in draws]


def group_matrix(groups: list[BootstrapGroup]) -> np.ndarray:
    """Empilha os grupos numa matriz [count × |b*|] de índices."""
    return np.stack([g.indices for g in groups])
