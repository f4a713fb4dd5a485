"""Packet-loss processes and exact receive-count distributions.

A loss pattern is a binary sequence Z_1, Z_2, ... with Z_k = 1 when the k-th
packet of a batch reaches the next node.  Every model here is a (possibly
single-state) hidden Markov chain started in its stationary distribution,
optionally preceded by a fixed prefix of outcomes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidModel, NonErgodicModel

_ROW_TOL = 1e-12


def _check_prob(name, value):
    value = float(value)
    if not 0.0 <= value <= 1.0 or np.isnan(value):
        raise InvalidModel(f"{name}={value} is not a probability")
    return value


@dataclass(frozen=True)
class Bernoulli:
    """Independent losses, each packet dropped with probability ``p``."""

    p: float

    def __post_init__(self):
        object.__setattr__(self, "p", _check_prob("p", self.p))


@dataclass(frozen=True)
class MarkovModulated:
    """Finite-state chain; state ``s`` drops a packet w.p. ``loss_per_state[s]``.

    The state at position k determines Z_k, then the chain moves once.
    """

    transition: tuple
    loss_per_state: tuple

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        loss = np.asarray(self.loss_per_state, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] == 0:
            raise InvalidModel("transition must be a non-empty square matrix")
        if loss.shape != (T.shape[0],):
            raise InvalidModel("loss_per_state length must match the number of states")
        if np.any(T < 0) or np.any(T > 1) or np.any(np.isnan(T)):
            raise InvalidModel("transition entries must be probabilities")
        if np.any(np.abs(T.sum(axis=1) - 1.0) > _ROW_TOL):
            raise InvalidModel("transition rows must sum to 1")
        for s, v in enumerate(loss):
            _check_prob(f"loss_per_state[{s}]", v)
        n_comp, _ = connected_components(T > 0, directed=True, connection="strong")
        if n_comp != 1:
            raise NonErgodicModel("Markov chain is not irreducible")
        object.__setattr__(self, "transition", tuple(tuple(float(x) for x in row) for row in T))
        object.__setattr__(self, "loss_per_state", tuple(float(x) for x in loss))

    @property
    def n_states(self) -> int:
        return len(self.loss_per_state)


@dataclass(frozen=True)
class GilbertElliott:
    """Two-state Good/Bad burst-loss channel (state 0 = Good, 1 = Bad)."""

    p_gb: float
    p_bg: float
    loss_good: float = 0.0
    loss_bad: float = 1.0

    def __post_init__(self):
        for name in ("p_gb", "p_bg", "loss_good", "loss_bad"):
            object.__setattr__(self, name, _check_prob(name, getattr(self, name)))
        self.as_markov()  # irreducibility check

    def as_markov(self) -> MarkovModulated:
        return MarkovModulated(
            transition=((1.0 - self.p_gb, self.p_gb), (self.p_bg, 1.0 - self.p_bg)),
            loss_per_state=(self.loss_good, self.loss_bad),
        )


@dataclass(frozen=True)
class DeterministicPrefix:
    """Fixed outcomes for the first packets, then ``tail`` in steady state.

    ``prefix`` uses 1 for received and 0 for lost.  Such a process is not
    stationary, so the concavity guarantee for expected-rank functions does
    not apply to it.
    """

    prefix: tuple
    tail: "LossModel" = field(default_factory=lambda: Bernoulli(0.0))

    def __post_init__(self):
        bits = tuple(int(b) for b in self.prefix)
        if any(b not in (0, 1) for b in bits):
            raise InvalidModel("prefix entries must be 0 or 1")
        object.__setattr__(self, "prefix", bits)


LossModel = Union[Bernoulli, GilbertElliott, MarkovModulated, DeterministicPrefix]


@dataclass(frozen=True)
class _Chain:
    prefix: tuple
    pi: np.ndarray
    T: np.ndarray
    recv: np.ndarray

    @property
    def n(self):
        return len(self.pi)


def _chain(model: LossModel) -> _Chain:
    prefix = ()
    while isinstance(model, DeterministicPrefix):
        prefix += model.prefix
        model = model.tail
    if isinstance(model, Bernoulli):
        T = np.ones((1, 1))
        recv = np.array([1.0 - model.p])
    else:
        if isinstance(model, GilbertElliott):
            model = model.as_markov()
        if not isinstance(model, MarkovModulated):
            raise InvalidModel(f"unsupported loss model {model!r}")
        T = np.array(model.transition)
        recv = 1.0 - np.array(model.loss_per_state)
    return _Chain(prefix, _stationary(T), T, recv)


def _stationary(T: np.ndarray) -> np.ndarray:
    n = T.shape[0]
    if n == 1:
        return np.ones(1)
    A = np.vstack([T.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_distribution(model: LossModel) -> np.ndarray:
    """Stationary state distribution; for a prefixed model, that of its tail."""
    return _chain(model).pi.copy()


def _steps(chain: _Chain, start: int, count: int) -> Iterator[tuple]:
    """Yield (receive probability per state, transition or None) per position.

    Positions are 1-based; ``start`` is the first one yielded.
    """
    for k in range(start, start + count):
        if k <= len(chain.prefix):
            yield np.full(chain.n, float(chain.prefix[k - 1])), None
        else:
            yield chain.recv, chain.T


def _initial(chain: _Chain, burn_in: int) -> np.ndarray:
    dist = chain.pi.copy()
    for _, T in _steps(chain, 1, burn_in):
        if T is not None:
            dist = dist @ T
    return dist


def receive_count_table(model: LossModel, t_max: int, burn_in: int = 0) -> np.ndarray:
    """Matrix ``P`` with ``P[t, i] = Pr(i of the first t packets received)``.

    One forward pass over (state, count) gives every horizon t <= t_max.
    ``burn_in`` discards that many leading positions first.
    """
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    chain = _chain(model)
    alpha = np.zeros((chain.n, t_max + 1))
    alpha[:, 0] = _initial(chain, burn_in)
    P = np.zeros((t_max + 1, t_max + 1))
    P[0, 0] = 1.0
    for t, (recv, T) in enumerate(_steps(chain, burn_in + 1, t_max), start=1):
        lost = alpha * (1.0 - recv)[:, None]
        got = alpha * recv[:, None]
        nxt = lost.copy()
        nxt[:, 1:] += got[:, :-1]
        alpha = nxt if T is None else T.T @ nxt
        P[t] = alpha.sum(axis=0)
    return P


def receive_count_dist(model: LossModel, t: int, burn_in: int = 0) -> np.ndarray:
    """Distribution of the number of received packets among ``t`` sent."""
    return receive_count_table(model, t, burn_in)[t, : t + 1]


def joint_event_prob(
    model: LossModel,
    constraints: Iterable[tuple] = (),
    rank_window: Optional[Sequence[int]] = None,
) -> float:
    """Probability of fixed outcomes jointly with a received-count condition.

    ``constraints`` is a list of ``(index, bit)`` pairs with 1-based indices.
    ``rank_window = (start, end, k)`` adds the event "exactly k packets
    received among positions start..end", which is the rank of
    diag(Z_start, ..., Z_end) once the field is large enough.
    Contradictory constraints give probability 0.
    """
    allowed = {}
    for idx, bit in constraints:
        idx, bit = int(idx), int(bit)
        if idx < 1:
            raise ValueError("constraint indices are 1-based")
        allowed.setdefault(idx, {0, 1}).intersection_update({bit})
    if any(not bits for bits in allowed.values()):
        return 0.0
    horizon = max(allowed, default=0)
    if rank_window is not None:
        w_start, w_end, target = (int(v) for v in rank_window)
        horizon = max(horizon, w_end)
    else:
        w_start, w_end, target = 1, 0, 0
    width = max(w_end - w_start + 1, 0)
    chain = _chain(model)
    alpha = np.zeros((chain.n, width + 1))
    alpha[:, 0] = chain.pi
    for k, (recv, T) in enumerate(_steps(chain, 1, horizon), start=1):
        bits = allowed.get(k, {0, 1})
        lost = alpha * (1.0 - recv)[:, None] if 0 in bits else np.zeros_like(alpha)
        got = alpha * recv[:, None] if 1 in bits else np.zeros_like(alpha)
        if w_start <= k <= w_end:
            nxt = lost
            nxt[:, 1:] += got[:, :-1]
        else:
            nxt = lost + got
        alpha = nxt if T is None else T.T @ nxt
    totals = alpha.sum(axis=0)
    if rank_window is None:
        return float(totals.sum())
    if not 0 <= target <= width:
        return 0.0
    return float(totals[target])


def sample_patterns(model: LossModel, t: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent loss patterns of length ``t`` as a (n, t) uint8 array."""
    chain = _chain(model)
    out = np.empty((n, t), dtype=np.uint8)
    if chain.n == 1:
        n_fixed = min(len(chain.prefix), t)
        out[:, :n_fixed] = np.array(chain.prefix[:n_fixed], dtype=np.uint8)
        out[:, n_fixed:] = rng.random((n, t - n_fixed)) < chain.recv[0]
        return out
    cum_pi = np.cumsum(chain.pi)
    cum_T = np.cumsum(chain.T, axis=1)
    states = np.minimum(np.searchsorted(cum_pi, rng.random(n), side="right"), chain.n - 1)
    for k, (recv, T) in enumerate(_steps(chain, 1, t)):
        out[:, k] = rng.random(n) < recv[states]
        if T is not None:
            u = rng.random(n)
            states = np.minimum((u[:, None] >= cum_T[states]).sum(axis=1), chain.n - 1)
    return out


def sample_pattern(model: LossModel, t: int, seed: int) -> np.ndarray:
    """One loss pattern of length ``t``; deterministic in ``seed``."""
    return sample_patterns(model, t, 1, np.random.default_rng(seed))[0]


def from_config(record: dict) -> LossModel:
    """Build a model from a tagged record such as ``{"type": "bernoulli", "p": 0.2}``."""
    if not isinstance(record, dict) or "type" not in record:
        raise InvalidModel("channel record must be a mapping with a 'type' key")
    kind = str(record["type"]).lower()
    try:
        if kind == "bernoulli":
            return Bernoulli(record["p"])
        if kind in ("ge", "gilbert_elliott", "gilbert-elliott"):
            return GilbertElliott(record["p_gb"], record["p_bg"],
                                  record.get("loss_good", 0.0), record.get("loss_bad", 1.0))
        if kind in ("markov", "markov_modulated"):
            return MarkovModulated(record["transition"], record["loss_per_state"])
        if kind in ("prefix", "deterministic_prefix"):
            return DeterministicPrefix(tuple(record["prefix"]), from_config(record["tail"]))
    except KeyError as exc:
        raise InvalidModel(f"channel record of type {kind!r} is missing {exc}") from None
    raise InvalidModel(f"unknown channel type {kind!r}")


def to_config(model: LossModel) -> dict:
    if isinstance(model, Bernoulli):
        return {"type": "bernoulli", "p": model.p}
    if isinstance(model, GilbertElliott):
        return {"type": "ge", "p_gb": model.p_gb, "p_bg": model.p_bg,
                "loss_good": model.loss_good, "loss_bad": model.loss_bad}
    if isinstance(model, MarkovModulated):
        return {"type": "markov", "transition": [list(r) for r in model.transition],
                "loss_per_state": list(model.loss_per_state)}
    return {"type": "prefix", "prefix": list(model.prefix), "tail": to_config(model.tail)}


def is_stationary(model: LossModel) -> bool:
    return not isinstance(model, DeterministicPrefix) or not model.prefix
