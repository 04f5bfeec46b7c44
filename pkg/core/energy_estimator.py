"""
Energy Estimator
================

Analytical on-chip energy of RSNN training from per-operation costs.

    E_one = P_u N I S + (P_s + C P_w) N R S        (one rollout)
    E_tot = E_one G P                               (whole training run)

Per-operation energies are given in pJ and converted to joules at the
boundary; everything returned is SI joules. The default spike rate R is an
assumption; measured_spike_rate() derives it from a recorded rollout trace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

PJ = 1e-12
# Measured GPU energy of a recurrent PPO baseline training run.
GPU_REFERENCE_J = 18.4e6
TABLE_POPULATIONS = (1024, 2048, 4096, 8192)
TRACE_MAGIC = "# satr-spike-trace v1"


class EnergyParams(BaseModel):
    """Per-operation energies (pJ) and network/training sizes."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    p_s_pj: float = Field(default=23.6, ge=0.0, description="energy per synaptic spike op")
    p_w_pj: float = Field(default=1.7, ge=0.0, description="within-tile spike energy")
    p_u_pj: float = Field(default=81.0, ge=0.0, description="energy per neuron update")
    generations: int = Field(default=2000, ge=0)
    population: int = Field(default=1024, ge=0)
    timesteps: int = Field(default=33_200, ge=0)
    neurons: int = Field(default=256, ge=0)
    spike_rate: float = Field(default=0.025, ge=0.0)
    connections: int = Field(default=128, ge=0)
    update_ops: int = Field(default=4, ge=0)


def energy_per_rollout(p: EnergyParams) -> float:
    """E_one in joules."""
    update = p.p_u_pj * p.neurons * p.update_ops * p.timesteps
    synaptic = (p.p_s_pj + p.connections * p.p_w_pj) * p.neurons * p.spike_rate * p.timesteps
    return (update + synaptic) * PJ


def total_energy(p: EnergyParams) -> float:
    """E_tot = E_one G P in joules."""
    return energy_per_rollout(p) * p.generations * p.population


@dataclass(frozen=True)
class SpikeTrace:
    """Per-substep total spike counts of one rollout."""
    counts: np.ndarray
    neurons: int


def measured_spike_rate(trace: SpikeTrace) -> float:
    """Total spikes / (N S)."""
    counts = np.asarray(trace.counts)
    if counts.size == 0:
        raise ValueError("empty spike trace")
    if trace.neurons <= 0:
        raise ValueError("spike trace needs a positive neuron count")
    return float(counts.sum()) / (trace.neurons * counts.size)


def write_spike_trace(path: Path, trace: SpikeTrace) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{TRACE_MAGIC} neurons={trace.neurons}"]
    lines.extend(str(int(c)) for c in np.asarray(trace.counts))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_spike_trace(path: Path) -> SpikeTrace:
    """
    Read a trace written by write_spike_trace.

    Raises:
        FileNotFoundError if the file is missing
        ValueError if the header is not a spike trace header
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Spike trace not found at {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(TRACE_MAGIC):
        raise ValueError(f"{path} is not a spike trace (missing '{TRACE_MAGIC}' header)")
    try:
        neurons = int(lines[0].split("neurons=")[1])
        counts = np.array([int(x) for x in lines[1:] if x.strip()], dtype=np.int64)
    except (IndexError, ValueError) as e:
        raise ValueError(f"Malformed spike trace at {path}: {e}") from e
    return SpikeTrace(counts=counts, neurons=neurons)


@dataclass(frozen=True)
class EnergyRow:
    population: int
    total_j: float

    @property
    def total_kj(self) -> float:
        return self.total_j / 1e3

    @property
    def gpu_ratio(self) -> float:
        """How many times lower than the measured GPU reference."""
        return GPU_REFERENCE_J / self.total_j if self.total_j > 0 else float("inf")


def energy_table(p: EnergyParams, pops: Sequence[int] = TABLE_POPULATIONS) -> List[EnergyRow]:
    """One E_tot row per population size."""
    return [EnergyRow(population=n, total_j=total_energy(p.model_copy(update={"population": n})))
            for n in pops]
