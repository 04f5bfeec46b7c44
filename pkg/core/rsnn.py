"""
Recurrent Spiking Network
=========================

LIF recurrent spiking policy instantiated from a binary connectivity sample.

Features:
- Topology: layer sizes, Dale's-law split, time constants, variance-preserving resistances
- Bitset engine: packed read-in / recurrent / read-out masks, AND+popcount integration
- Dense engine: float weights, used as the oracle for binary connectivity and
  as the execution engine for real-valued (ES) weights
- K exponential-Euler substeps per environment step, threshold 1.0, hard reset to 0
- rollout(): one undiscounted episode with optional per-substep spike counts
- model_footprint(): parameter count and storage at 1-bit vs FP32

Connectivity layout inside theta (row = postsynaptic neuron):
    [read-in d_h x d_in | recurrent d_h x d_h | read-out d_out x d_h]
Hidden neurons 0..n_exc-1 are excitatory, the rest inhibitory; the sign
applies to every outgoing synapse, recurrent and read-out alike.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .bernoulli_dist import ConnectivitySample, ShapeMismatchError
from .bitset_engine import (
    DEFAULT_WORD_BITS,
    PackedBitMatrix,
    n_words_for,
    pack_matrix,
    pack_spikes,
    signed_popcount_matvec,
)

logger = logging.getLogger(__name__)

ENGINES = ("bitset", "dense")


# ---------- Topology ----------

class Topology(BaseModel):
    """Network sizes and LIF constants (times in ms)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    d_in: int = Field(default=4, ge=1)
    d_h: int = Field(default=256, ge=1)
    d_out: int = Field(default=1, ge=1)
    exc_ratio: float = Field(default=0.5, ge=0.0, le=1.0)
    dt: float = Field(default=0.5, gt=0.0)
    tau_syn: float = Field(default=5.0, gt=0.0)
    tau_m: float = Field(default=10.0, gt=0.0)
    tau_out: float = Field(default=10.0, gt=0.0)
    substeps: int = Field(default=33, ge=1)
    # e.g. (33, 33, 33, 33, 34) averages the 16.6 ms / 0.5 ms = 33.2 substeps
    substep_pattern: Optional[Tuple[int, ...]] = None
    v_th: float = Field(default=1.0, gt=0.0)
    word_bits: int = DEFAULT_WORD_BITS

    @field_validator("substep_pattern")
    @classmethod
    def validate_pattern(cls, v):
        if v is not None and (len(v) == 0 or min(v) < 1):
            raise ValueError("substep_pattern must be a non-empty list of positive integers")
        return v

    @field_validator("word_bits")
    @classmethod
    def validate_word_bits(cls, v: int):
        if v not in (32, 64):
            raise ValueError("word_bits must be 32 or 64")
        return v

    @model_validator(mode="after")
    def validate_split(self):
        if not 0 <= self.n_exc <= self.d_h:
            raise ValueError("exc_ratio yields an invalid excitatory count")
        return self

    @property
    def n_exc(self) -> int:
        return int(math.floor(self.exc_ratio * self.d_h))

    @property
    def n_in_syn(self) -> int:
        return self.d_in * self.d_h

    @property
    def n_rec_syn(self) -> int:
        return self.d_h * self.d_h

    @property
    def n_out_syn(self) -> int:
        return self.d_h * self.d_out

    @property
    def synapse_count(self) -> int:
        """d = d_in d_h + d_h d_h + d_h d_out."""
        return self.n_in_syn + self.n_rec_syn + self.n_out_syn

    @property
    def alpha_syn(self) -> float:
        return math.exp(-self.dt / self.tau_syn)

    @property
    def alpha_m(self) -> float:
        return math.exp(-self.dt / self.tau_m)

    @property
    def alpha_out(self) -> float:
        return math.exp(-self.dt / self.tau_out)

    @property
    def r_in(self) -> float:
        return 0.15 * self.tau_m * math.sqrt(2.0 / self.d_in)

    @property
    def r_h(self) -> float:
        return 1.0 * (self.tau_m / self.tau_syn) * math.sqrt(2.0 / self.d_h)

    @property
    def r_out(self) -> float:
        return 5.0 * self.tau_out * math.sqrt(2.0 / self.d_h)

    def substeps_at(self, env_step: int) -> int:
        if self.substep_pattern:
            return self.substep_pattern[env_step % len(self.substep_pattern)]
        return self.substeps

    def presynaptic_signs(self) -> np.ndarray:
        """+1 for excitatory hidden neurons, -1 for inhibitory."""
        signs = -np.ones(self.d_h, dtype=np.float64)
        signs[: self.n_exc] = 1.0
        return signs

    def readout_bound(self) -> float:
        """|y| bound when every hidden neuron spikes on every substep."""
        return self.r_out * self.d_h * self.dt / (1.0 - self.alpha_out)

    def split(self, flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split a length-d vector into (read-in, recurrent, read-out) matrices."""
        flat = np.asarray(flat).reshape(-1)
        if flat.size != self.synapse_count:
            raise ShapeMismatchError(
                f"connectivity has {flat.size} entries, topology needs {self.synapse_count}"
            )
        a = self.n_in_syn
        b = a + self.n_rec_syn
        return (
            flat[:a].reshape(self.d_h, self.d_in),
            flat[a:b].reshape(self.d_h, self.d_h),
            flat[b:].reshape(self.d_out, self.d_h),
        )


# ---------- State ----------

@dataclass
class LifState:
    """Membrane potentials, synaptic currents, last-substep spikes, readout traces."""
    v: np.ndarray
    i_syn: np.ndarray
    s: np.ndarray
    y: np.ndarray

    @classmethod
    def zeros(cls, topology: Topology) -> "LifState":
        return cls(
            v=np.zeros(topology.d_h),
            i_syn=np.zeros(topology.d_h),
            s=np.zeros(topology.d_h, dtype=np.uint8),
            y=np.zeros(topology.d_out),
        )

    def copy(self) -> "LifState":
        return LifState(self.v.copy(), self.i_syn.copy(), self.s.copy(), self.y.copy())


def reset(state: LifState) -> LifState:
    """Zeroed state of the same shape."""
    return LifState(
        v=np.zeros_like(state.v),
        i_syn=np.zeros_like(state.i_syn),
        s=np.zeros_like(state.s),
        y=np.zeros_like(state.y),
    )


# ---------- Kernels ----------

@njit(cache=True, nogil=True)
def _bitset_substeps(in_words, rec_exc, rec_inh, out_exc, out_inh, obs, word_bits,
                     n_sub, a_syn, a_m, a_out, r_in, r_h, r_out, dt, v_th,
                     v, i_syn, s, y, counts):
    d_h = v.shape[0]
    d_out = y.shape[0]
    drive = np.empty(d_h)
    for j in range(d_h):
        acc = 0.0
        for b in range(in_words.shape[1]):
            w = in_words[j, b]
            if w == 0:
                continue
            base = b * word_bits
            for k in range(word_bits):
                if (w >> np.uint64(k)) & np.uint64(1):
                    acc += obs[base + k]
        drive[j] = r_in * acc * dt

    spike_words = np.zeros(rec_exc.shape[1], dtype=np.uint64)
    rec = np.zeros(d_h, dtype=np.int64)
    out = np.zeros(d_out, dtype=np.int64)
    pack_spikes(s, word_bits, spike_words)
    for t in range(n_sub):
        signed_popcount_matvec(rec_exc, rec_inh, spike_words, rec)
        fired = 0
        for j in range(d_h):
            i_syn[j] = a_syn * i_syn[j] + r_h * rec[j]
            v[j] = a_m * v[j] + i_syn[j] * dt + drive[j]
            if v[j] >= v_th:
                s[j] = 1
                v[j] = 0.0
                fired += 1
            else:
                s[j] = 0
        counts[t] = fired
        pack_spikes(s, word_bits, spike_words)
        signed_popcount_matvec(out_exc, out_inh, spike_words, out)
        for o in range(d_out):
            y[o] = a_out * y[o] + r_out * out[o] * dt


@njit(cache=True, nogil=True)
def _dense_substeps(w_in, w_rec, w_out, obs, n_sub, a_syn, a_m, a_out, r_in, r_h, r_out,
                    dt, v_th, v, i_syn, s, y, counts):
    d_h = v.shape[0]
    d_in = obs.shape[0]
    d_out = y.shape[0]
    drive = np.empty(d_h)
    for j in range(d_h):
        acc = 0.0
        for i in range(d_in):
            acc += w_in[j, i] * obs[i]
        drive[j] = r_in * acc * dt

    sf = np.empty(d_h)
    for i in range(d_h):
        sf[i] = s[i]
    for t in range(n_sub):
        fired = 0
        for j in range(d_h):
            acc = 0.0
            for i in range(d_h):
                acc += w_rec[j, i] * sf[i]
            i_syn[j] = a_syn * i_syn[j] + r_h * acc
        for j in range(d_h):
            v[j] = a_m * v[j] + i_syn[j] * dt + drive[j]
            if v[j] >= v_th:
                s[j] = 1
                v[j] = 0.0
                fired += 1
            else:
                s[j] = 0
        for i in range(d_h):
            sf[i] = s[i]
        counts[t] = fired
        for o in range(d_out):
            acc = 0.0
            for i in range(d_h):
                acc += w_out[o, i] * sf[i]
            y[o] = a_out * y[o] + r_out * acc * dt


# ---------- Networks ----------

@dataclass(frozen=True)
class StepOutput:
    state: LifState
    action: np.ndarray
    spike_counts: np.ndarray


@dataclass(frozen=True)
class BitsetNetwork:
    """Packed masks built once per episode; immutable and shareable."""
    topology: Topology
    read_in: PackedBitMatrix
    rec_exc: PackedBitMatrix
    rec_inh: PackedBitMatrix
    out_exc: PackedBitMatrix
    out_inh: PackedBitMatrix
    engine: str = field(default="bitset", init=False)

    def step(self, state: LifState, obs: np.ndarray, env_step: int = 0) -> StepOutput:
        topo = self.topology
        obs = _check_obs(obs, topo)
        nxt = state.copy()
        k = topo.substeps_at(env_step)
        counts = np.zeros(k, dtype=np.int64)
        _bitset_substeps(
            self.read_in.row_words.astype(np.uint64, copy=False),
            self.rec_exc.row_words.astype(np.uint64, copy=False),
            self.rec_inh.row_words.astype(np.uint64, copy=False),
            self.out_exc.row_words.astype(np.uint64, copy=False),
            self.out_inh.row_words.astype(np.uint64, copy=False),
            obs, topo.word_bits, k,
            topo.alpha_syn, topo.alpha_m, topo.alpha_out,
            topo.r_in, topo.r_h, topo.r_out, topo.dt, topo.v_th,
            nxt.v, nxt.i_syn, nxt.s, nxt.y, counts,
        )
        return StepOutput(state=nxt, action=nxt.y.copy(), spike_counts=counts)


@dataclass(frozen=True)
class DenseNetwork:
    """Float weight matrices (already signed); oracle and ES engine."""
    topology: Topology
    w_in: np.ndarray
    w_rec: np.ndarray
    w_out: np.ndarray
    engine: str = field(default="dense", init=False)

    def step(self, state: LifState, obs: np.ndarray, env_step: int = 0) -> StepOutput:
        topo = self.topology
        obs = _check_obs(obs, topo)
        nxt = state.copy()
        k = topo.substeps_at(env_step)
        counts = np.zeros(k, dtype=np.int64)
        _dense_substeps(
            self.w_in, self.w_rec, self.w_out, obs, k,
            topo.alpha_syn, topo.alpha_m, topo.alpha_out,
            topo.r_in, topo.r_h, topo.r_out, topo.dt, topo.v_th,
            nxt.v, nxt.i_syn, nxt.s, nxt.y, counts,
        )
        return StepOutput(state=nxt, action=nxt.y.copy(), spike_counts=counts)


Network = Union[BitsetNetwork, DenseNetwork]


def _check_obs(obs: np.ndarray, topo: Topology) -> np.ndarray:
    obs = np.ascontiguousarray(obs, dtype=np.float64).reshape(-1)
    if obs.size != topo.d_in:
        raise ShapeMismatchError(f"observation has {obs.size} entries, expected {topo.d_in}")
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation must be finite")
    return obs


def instantiate(topology: Topology, theta: Union[ConnectivitySample, np.ndarray],
                engine: str = "bitset") -> Network:
    """
    Build the policy network for one sampled connectivity.

    Raises:
        ShapeMismatchError: theta does not have topology.synapse_count bits
        ValueError: unknown engine
    """
    bits = theta.bits if isinstance(theta, ConnectivitySample) else np.asarray(theta)
    w_in, w_rec, w_out = topology.split(bits.astype(np.uint8))
    exc_cols = np.zeros(topology.d_h, dtype=bool)
    exc_cols[: topology.n_exc] = True

    if engine == "bitset":
        wb = topology.word_bits
        return BitsetNetwork(
            topology=topology,
            read_in=pack_matrix(w_in, wb),
            rec_exc=pack_matrix(w_rec * exc_cols, wb),
            rec_inh=pack_matrix(w_rec * ~exc_cols, wb),
            out_exc=pack_matrix(w_out * exc_cols, wb),
            out_inh=pack_matrix(w_out * ~exc_cols, wb),
        )
    if engine == "dense":
        signs = topology.presynaptic_signs()
        return DenseNetwork(
            topology=topology,
            w_in=np.ascontiguousarray(w_in, dtype=np.float64),
            w_rec=np.ascontiguousarray(w_rec * signs, dtype=np.float64),
            w_out=np.ascontiguousarray(w_out * signs, dtype=np.float64),
        )
    raise ValueError(f"unknown engine '{engine}', expected one of {ENGINES}")


def instantiate_dense(topology: Topology, weights: np.ndarray) -> DenseNetwork:
    """Real-valued weights in the theta layout; signs come from the values."""
    w_in, w_rec, w_out = topology.split(np.asarray(weights, dtype=np.float64))
    return DenseNetwork(
        topology=topology,
        w_in=np.ascontiguousarray(w_in),
        w_rec=np.ascontiguousarray(w_rec),
        w_out=np.ascontiguousarray(w_out),
    )


def policy_step(net: Network, state: LifState, obs: np.ndarray,
                env_step: int = 0) -> Tuple[LifState, np.ndarray]:
    """Run K substeps for one environment step; returns (new state, action)."""
    out = net.step(state, obs, env_step)
    return out.state, out.action


# ---------- Rollout ----------

@dataclass(frozen=True)
class RolloutResult:
    total_return: float
    steps: int
    spike_counts: Optional[np.ndarray] = None


def rollout(net: Network, env, seed: int, trace: bool = False) -> RolloutResult:
    """One undiscounted episode from a zero state."""
    state = LifState.zeros(net.topology)
    obs = env.reset(seed)
    total = 0.0
    steps = 0
    traces = []
    done = False
    while not done:
        out = net.step(state, obs, steps)
        state = out.state
        if trace:
            traces.append(out.spike_counts)
        obs, reward, done = env.step(out.action)
        total += reward
        steps += 1
    counts = np.concatenate(traces) if trace and traces else None
    return RolloutResult(total_return=total, steps=steps, spike_counts=counts)


# ---------- Footprint ----------

@dataclass(frozen=True)
class Footprint:
    params: int
    bytes_1bit: int
    bytes_fp32: int

    @property
    def ratio(self) -> float:
        return self.bytes_fp32 / self.bytes_1bit


def model_footprint(topology: Topology) -> Footprint:
    """Storage of one connectivity at 1 bit vs 32-bit floats per synapse."""
    d = topology.synapse_count
    return Footprint(params=d, bytes_1bit=n_words_for(d, 8), bytes_fp32=4 * d)
