"""Learning rules attached to connections.

Rules run once per simulation step, after every layer has stepped, using that
step's spikes and traces. ``hebbian`` and ``post_pre`` are per-event and not
scaled by ``dt``; the reward-modulated rules (Florian 2007) scale by ``dt``.

The ``*_update`` functions return full weight deltas and are the reference
forms; the rule classes apply the same arithmetic in place, touching only the
rows and columns that spiked.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from .errors import NumericError, ValidationError

if TYPE_CHECKING:
    from .neurons import Nodes
    from .topology import Connection


def hebbian_update(conn: "Connection", s_pre, s_post, x_pre, x_post, lr_pre: float, lr_post: float) -> np.ndarray:
    """Symmetric strengthening: both spike orders increase the weight."""
    return lr_post * conn.outer(x_pre, s_post) + lr_pre * conn.outer(s_pre, x_post)


def post_pre_update(conn: "Connection", s_pre, s_post, x_pre, x_post, lr_pre: float, lr_post: float) -> np.ndarray:
    """Pair-based STDP: potentiate when post follows pre, depress when pre follows post."""
    return lr_post * conn.outer(x_pre, s_post) - lr_pre * conn.outer(s_pre, x_post)


@dataclass
class MstdpState:
    p_plus: np.ndarray
    p_minus: np.ndarray
    e: np.ndarray | None = None
    a_plus: float = 1.0
    a_minus: float = -1.0
    tau_plus: float = 20.0
    tau_minus: float = 20.0
    tau_e: float = 25.0
    gamma: float = 0.25

    @classmethod
    def zeros(cls, conn: "Connection", eligibility: bool = False, **params: float) -> "MstdpState":
        return cls(
            p_plus=np.zeros(conn.n_pre),
            p_minus=np.zeros(conn.n_post),
            e=np.zeros(conn.w.shape) if eligibility else None,
            **params,
        )


def _check_reward(reward: float) -> float:
    reward = float(reward)
    if not math.isfinite(reward):
        raise NumericError(f"non-finite reward {reward}")
    return reward


def _add_scaled(trace: np.ndarray, spikes: np.ndarray, amplitude: float) -> None:
    if amplitude == 1.0:
        np.add(trace, spikes, out=trace)
    elif amplitude == -1.0:
        np.subtract(trace, spikes, out=trace)
    else:
        trace += amplitude * spikes


def _advance_traces(state: MstdpState, s_pre, s_post, dt: float) -> None:
    state.p_plus *= math.exp(-dt / state.tau_plus)
    _add_scaled(state.p_plus, s_pre, state.a_plus)
    state.p_minus *= math.exp(-dt / state.tau_minus)
    _add_scaled(state.p_minus, s_post, state.a_minus)


def _accumulate_zeta(conn: "Connection", out: np.ndarray, state: MstdpState, s_pre, s_post, scale: float) -> bool:
    """``out += scale * zeta``, skipping terms whose spikes are all zero."""
    post_any, pre_any = s_post.any(), s_pre.any()
    if post_any and pre_any:
        conn.accumulate_pair(out, state.p_plus, s_post, s_pre, state.p_minus, scale)
    elif post_any:
        conn.accumulate_outer(out, state.p_plus, s_post, scale)
    elif pre_any:
        conn.accumulate_outer(out, s_pre, state.p_minus, scale)
    return post_any or pre_any


def _zeta(conn: "Connection", state: MstdpState, s_pre, s_post) -> np.ndarray:
    return conn.outer(state.p_plus, s_post) + conn.outer(s_pre, state.p_minus)


def mstdp_update(conn: "Connection", state: MstdpState, s_pre, s_post, reward: float, dt: float) -> np.ndarray:
    """Reward-modulated STDP without eligibility trace. Advances ``state`` in place."""
    reward = _check_reward(reward)
    _advance_traces(state, s_pre, s_post, dt)
    return state.gamma * reward * _zeta(conn, state, s_pre, s_post) * dt


def mstdp_et_update(conn: "Connection", state: MstdpState, s_pre, s_post, reward: float, dt: float) -> np.ndarray:
    """Reward-modulated STDP with a decaying per-synapse eligibility trace."""
    reward = _check_reward(reward)
    _advance_traces(state, s_pre, s_post, dt)
    state.e *= math.exp(-dt / state.tau_e)
    state.e += _zeta(conn, state, s_pre, s_post)
    return state.gamma * reward * state.e * dt


class LearningRule(ABC):
    name = ""

    def bind(self, conn: "Connection") -> None:
        self.connection = conn

    @abstractmethod
    def update(self, pre: "Nodes", post: "Nodes", reward: float, dt: float) -> bool:
        """Apply one step of learning to the bound connection; return whether weights moved."""

    def reset(self) -> None:
        pass

    @abstractmethod
    def config(self) -> dict[str, Any]: ...

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, value in arrays.items():
            getattr(self, name)[...] = value


class _PairRule(LearningRule):
    depression_sign = -1.0

    def __init__(self, lr_pre: float = 1e-4, lr_post: float = 1e-2) -> None:
        if lr_pre < 0 or lr_post < 0:
            raise ValidationError("learning rates must be non-negative")
        self.lr_pre = float(lr_pre)
        self.lr_post = float(lr_post)

    def update(self, pre: "Nodes", post: "Nodes", reward: float, dt: float) -> bool:
        conn = self.connection
        pre_spiked = pre.s.any()
        post_spiked = post.s.any()
        if post_spiked and self.lr_post:
            conn.accumulate_outer(conn.w, pre.x, post.s, self.lr_post)
        if pre_spiked and self.lr_pre:
            conn.accumulate_outer(conn.w, pre.s, post.x, self.depression_sign * self.lr_pre)
        return bool(pre_spiked or post_spiked)

    def config(self) -> dict[str, Any]:
        return {"type": self.name, "lr_pre": self.lr_pre, "lr_post": self.lr_post}


class Hebbian(_PairRule):
    name = "hebbian"
    depression_sign = 1.0


class PostPre(_PairRule):
    name = "post_pre"


class MSTDP(LearningRule):
    name = "m_stdp"
    eligibility = False

    def __init__(
        self,
        a_plus: float = 1.0,
        a_minus: float = -1.0,
        tau_plus: float = 20.0,
        tau_minus: float = 20.0,
        gamma: float = 0.25,
        tau_e: float = 25.0,
    ) -> None:
        if a_plus < 0 or a_minus > 0:
            raise ValidationError("require a_plus >= 0 and a_minus <= 0")
        if min(tau_plus, tau_minus, tau_e) <= 0:
            raise ValidationError("time constants must be positive")
        self.params = dict(
            a_plus=float(a_plus), a_minus=float(a_minus), tau_plus=float(tau_plus),
            tau_minus=float(tau_minus), tau_e=float(tau_e), gamma=float(gamma),
        )

    def bind(self, conn: "Connection") -> None:
        super().bind(conn)
        self.state = MstdpState.zeros(conn, eligibility=self.eligibility, **self.params)

    def reset(self) -> None:
        self.state.p_plus[:] = 0.0
        self.state.p_minus[:] = 0.0
        if self.state.e is not None:
            self.state.e[:] = 0.0

    def update(self, pre: "Nodes", post: "Nodes", reward: float, dt: float) -> bool:
        reward = _check_reward(reward)
        st, conn = self.state, self.connection
        s_pre, s_post = pre.state.s, post.state.s
        _advance_traces(st, s_pre, s_post, dt)
        if reward == 0.0 or st.gamma == 0.0:
            return False
        return _accumulate_zeta(conn, conn.w, st, s_pre, s_post, st.gamma * reward * dt)

    def config(self) -> dict[str, Any]:
        return {"type": self.name, **self.params}

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"p_plus": self.state.p_plus, "p_minus": self.state.p_minus}
        if self.state.e is not None:
            out["e"] = self.state.e
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, value in arrays.items():
            getattr(self.state, name)[...] = value


class MSTDPET(MSTDP):
    name = "m_stdp_et"
    eligibility = True

    def update(self, pre: "Nodes", post: "Nodes", reward: float, dt: float) -> bool:
        reward = _check_reward(reward)
        st, conn = self.state, self.connection
        s_pre, s_post = pre.state.s, post.state.s
        _advance_traces(st, s_pre, s_post, dt)
        st.e *= math.exp(-dt / st.tau_e)
        _accumulate_zeta(conn, st.e, st, s_pre, s_post, 1.0)
        if reward == 0.0 or st.gamma == 0.0:
            return False
        conn.w += (st.gamma * reward * dt) * st.e
        return True


RULE_TYPES: dict[str, type[LearningRule]] = {
    cls.name: cls for cls in (Hebbian, PostPre, MSTDP, MSTDPET)
}


def build_rule(config: dict[str, Any]) -> LearningRule:
    config = dict(config)
    kind = config.pop("type", None)
    try:
        cls = RULE_TYPES[kind]
    except KeyError:
        raise ValidationError(f"unknown learning rule {kind!r}") from None
    return cls(**config)
