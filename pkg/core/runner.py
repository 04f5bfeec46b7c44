"""
Runner
======

Generation loop, parallel rollouts, evaluation, training and sweeps.

Features:
- run_generation(): sample N connectivities, roll them out, rank, estimate
  the natural gradient and apply the configured update (SATR, EC, EC+TR)
- Gaussian ES generation over real weights through the dense engine
- evaluate_policy(): mean return over eval episodes on a separate seed stream
- train(): G generations with periodic evaluation, run.csv, checkpoint, summary, resume
- sweep(): every (optimizer, N, seed) cell, median final eval per cell into sweep.csv

Rollouts fan out over a thread pool (the LIF kernels release the GIL).
Results are collected in member order, so logs do not depend on the
worker count or scheduling.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .bernoulli_dist import (
    STREAM_ES_NOISE,
    STREAM_EVAL,
    STREAM_INIT,
    STREAM_TRAIN,
    ConnectivitySample,
    ProbVector,
    SeedTag,
    kl_quadratic,
    sample,
    sample_population,
)
from .energy_estimator import SpikeTrace
from .fitness_shaping import NaturalGradient, ReturnBatch, natural_gradient_estimate
from .optimizers import apply_update, bernoulli_rule, es_perturbations, es_step
from .rsnn import Topology, instantiate, instantiate_dense, rollout
from .run_config import RunConfig
from .run_store import (
    CHECKPOINT_FILENAME,
    CheckpointError,
    CheckpointHeader,
    GenerationLog,
    RunSummary,
    SweepRow,
    build_summary,
    load_checkpoint,
    load_summary,
    read_run_log,
    run_dir_name,
    save_checkpoint,
    save_run_config,
    write_run_log,
    write_sweep,
)

logger = logging.getLogger(__name__)

# rho for Bernoulli optimizers, a weight vector for ES
Params = Union[ProbVector, np.ndarray]


class RolloutError(RuntimeError):
    """A rollout worker failed; the generation is aborted."""
    pass


@dataclass(frozen=True)
class TrainResult:
    params: Params
    logs: List[GenerationLog]
    run_dir: Path
    summary: RunSummary


# ---------- Helpers ----------

def _map_ordered(fn: Callable[[int], float], n: int,
                 pool: Optional[ThreadPoolExecutor]) -> List[float]:
    """fn(0..n-1) in member order, on the pool when one is given."""
    if pool is None:
        return [fn(i) for i in range(n)]
    return list(pool.map(fn, range(n)))


def _guarded(fn: Callable[[int], float], what: str) -> Callable[[int], float]:
    def run(i: int) -> float:
        try:
            return float(fn(i))
        except Exception as e:
            raise RolloutError(f"{what}: member {i} failed: {e}") from e
    return run


def _topology(cfg: RunConfig) -> Optional[Topology]:
    # direct mode scores theta itself, there is no network
    return None if cfg.is_direct else cfg.resolved_topology()


def _bernoulli_return(cfg: RunConfig, topology: Optional[Topology],
                      theta: ConnectivitySample, env_seed: int) -> float:
    # Environments are stateful; every rollout gets its own instance.
    env = cfg.build_env()
    if topology is None:
        return env.score_bits(theta.bits)
    net = instantiate(topology, theta, cfg.engine)
    return rollout(net, env, env_seed).total_return


def _weights_return(cfg: RunConfig, topology: Topology, weights: np.ndarray,
                    env_seed: int) -> float:
    env = cfg.build_env()
    return rollout(instantiate_dense(topology, weights), env, env_seed).total_return


def _make_pool(cfg: RunConfig) -> Optional[ThreadPoolExecutor]:
    if cfg.workers <= 1:
        return None
    return ThreadPoolExecutor(max_workers=cfg.workers, thread_name_prefix="rollout")


def initial_params(cfg: RunConfig, run_seed: int) -> Params:
    """Uniform rho for Bernoulli optimizers, small Gaussian weights for ES."""
    dim = cfg.search_dim()
    if cfg.optimizer == "es":
        gen = SeedTag(run_seed=run_seed, generation=0, member=0, stream=STREAM_INIT).generator()
        return cfg.es.init_std * gen.standard_normal(dim)
    return ProbVector.uniform(dim, cfg.init_prob, cfg.clamp_eps)


# ---------- One generation ----------

def run_generation(
    params: Params,
    cfg: RunConfig,
    gen_idx: int,
    run_seed: Optional[int] = None,
    pool: Optional[ThreadPoolExecutor] = None,
) -> Tuple[Params, GenerationLog]:
    """
    One generation: sample, roll out, rank, estimate, update.

    Raises:
        RolloutError: a member's rollout failed (params are left as they were)
    """
    seed = cfg.seeds[0] if run_seed is None else run_seed
    start = time.perf_counter()
    if cfg.optimizer == "es":
        new_params, row = _es_generation(params, cfg, gen_idx, seed, pool)
    else:
        new_params, row = _bernoulli_generation(params, cfg, gen_idx, seed, pool)
    wall_ms = (time.perf_counter() - start) * 1e3
    return new_params, row.model_copy(update={"wall_ms": wall_ms})


def _bernoulli_generation(rho: ProbVector, cfg: RunConfig, gen_idx: int, seed: int,
                          pool: Optional[ThreadPoolExecutor]) -> Tuple[ProbVector, GenerationLog]:
    topology = _topology(cfg)
    samples = sample_population(rho, seed, gen_idx, cfg.pop_size, STREAM_TRAIN)

    def member(n: int) -> float:
        theta = samples[n]
        return _bernoulli_return(cfg, topology, theta, theta.seed_tag.episode_seed())

    returns = _map_ordered(_guarded(member, f"generation {gen_idx}"), cfg.pop_size, pool)
    batch = ReturnBatch.from_raw(returns)
    grad = natural_gradient_estimate(samples, batch.shaped, rho)
    if not grad.has_signal:
        logger.info("generation %d: all %d returns tied, zero step", gen_idx, cfg.pop_size)

    rule = bernoulli_rule(cfg.optimizer, cfg.satr, cfg.ec, cfg.tr)
    delta = rule(rho, grad)
    new_rho = apply_update(rho, delta)
    row = GenerationLog(
        generation=gen_idx,
        mean_return=batch.mean,
        max_return=batch.max,
        grad_energy=grad.energy,
        step_kl=kl_quadratic(rho, delta),
        no_signal=not grad.has_signal,
        rho_min=float(new_rho.probs.min()),
        rho_max=float(new_rho.probs.max()),
    )
    return new_rho, row


def _es_generation(weights: np.ndarray, cfg: RunConfig, gen_idx: int, seed: int,
                   pool: Optional[ThreadPoolExecutor]) -> Tuple[np.ndarray, GenerationLog]:
    topology = _topology(cfg)
    w = np.asarray(weights, dtype=np.float64)
    noise = SeedTag(run_seed=seed, generation=gen_idx, member=0, stream=STREAM_ES_NOISE)
    eps = es_perturbations(noise.generator(), cfg.pop_size, w.size, cfg.es)

    def member(n: int) -> float:
        tag = SeedTag(run_seed=seed, generation=gen_idx, member=n, stream=STREAM_TRAIN)
        return _weights_return(cfg, topology, w + eps[n], tag.episode_seed())

    returns = _map_ordered(_guarded(member, f"generation {gen_idx}"), cfg.pop_size, pool)
    batch = ReturnBatch.from_raw(returns)
    grad = NaturalGradient.from_vector(
        (batch.shaped[:, None] * eps).sum(axis=0) / (cfg.pop_size * cfg.es.sigma), cfg.pop_size)
    row = GenerationLog(
        generation=gen_idx,
        mean_return=batch.mean,
        max_return=batch.max,
        grad_energy=grad.energy,
        no_signal=not grad.has_signal,
    )
    return es_step(w, eps, batch.shaped, cfg.es), row


# ---------- Evaluation ----------

def _eval_theta(rho: ProbVector, cfg: RunConfig, tag: SeedTag) -> ConnectivitySample:
    if cfg.eval_mode == "map":
        bits = (rho.probs >= 0.5).astype(np.uint8)
        return ConnectivitySample(bits=bits, seed_tag=tag)
    return sample(rho, tag)


def _eval_tag(run_seed: int, episode: int) -> SeedTag:
    # Fixed per episode index so repeated evaluations see the same draws.
    return SeedTag(run_seed=run_seed, generation=0, member=episode, stream=STREAM_EVAL)


def evaluate_policy(
    params: Params,
    cfg: RunConfig,
    run_seed: Optional[int] = None,
    episodes: Optional[int] = None,
    pool: Optional[ThreadPoolExecutor] = None,
) -> float:
    """
    Mean undiscounted return over eval episodes; no learning happens.

    Bernoulli parameters get one connectivity per episode, sampled on the
    eval stream (or thresholded at 0.5 in map mode).
    """
    seed = cfg.seeds[0] if run_seed is None else run_seed
    n = cfg.eval_episodes if episodes is None else episodes
    if n < 1:
        raise ValueError("episodes must be >= 1")
    topology = _topology(cfg)

    if cfg.optimizer == "es":
        w = np.asarray(params, dtype=np.float64)

        def episode(e: int) -> float:
            return _weights_return(cfg, topology, w, _eval_tag(seed, e).episode_seed())
    else:
        def episode(e: int) -> float:
            tag = _eval_tag(seed, e)
            return _bernoulli_return(cfg, topology, _eval_theta(params, cfg, tag),
                                     tag.episode_seed())

    returns = np.asarray(_map_ordered(_guarded(episode, "evaluation"), n, pool))
    return float(np.sum(returns) / returns.size)


def record_spike_trace(params: Params, cfg: RunConfig,
                       run_seed: Optional[int] = None) -> SpikeTrace:
    """Per-substep hidden spike counts of the first eval episode."""
    if cfg.is_direct:
        raise ValueError("direct mode has no network to trace")
    seed = cfg.seeds[0] if run_seed is None else run_seed
    env, topology = cfg.build_env(), cfg.resolved_topology()
    tag = _eval_tag(seed, 0)
    if cfg.optimizer == "es":
        net = instantiate_dense(topology, params)
    else:
        net = instantiate(topology, _eval_theta(params, cfg, tag), cfg.engine)
    result = rollout(net, env, tag.episode_seed(), trace=True)
    return SpikeTrace(counts=result.spike_counts, neurons=topology.d_h)


# ---------- Training ----------

def _header(cfg: RunConfig, params: Params, generation: int, run_seed: int) -> CheckpointHeader:
    is_es = cfg.optimizer == "es"
    vec = np.asarray(params) if is_es else params.probs
    return CheckpointHeader(
        kind="es" if is_es else "bernoulli",
        generation=generation,
        run_seed=run_seed,
        dim=int(vec.size),
        clamp_eps=None if is_es else params.clamp_eps,
        fingerprint=cfg.fingerprint(),
    )


def params_from_checkpoint(header: CheckpointHeader, vec: np.ndarray) -> Params:
    if header.kind == "es":
        return vec
    return ProbVector(vec, clamp_eps=header.clamp_eps)


def _resume(cfg: RunConfig, run_dir: Path, run_seed: int):
    header, vec = load_checkpoint(run_dir)
    if header.fingerprint != cfg.fingerprint():
        raise CheckpointError(
            f"{run_dir}: checkpoint was written by a different configuration "
            f"({header.fingerprint} != {cfg.fingerprint()})")
    if header.run_seed != run_seed:
        raise CheckpointError(f"{run_dir}: checkpoint seed {header.run_seed}, asked for {run_seed}")
    logs = [r for r in read_run_log(run_dir) if r.generation < header.generation]
    if len(logs) != header.generation:
        raise CheckpointError(
            f"{run_dir}: run.csv has {len(logs)} rows before generation {header.generation}")
    try:
        initial_eval = load_summary(run_dir).initial_eval
    except FileNotFoundError:
        initial_eval = None
    logger.info("Resuming %s at generation %d", run_dir, header.generation)
    return params_from_checkpoint(header, vec), header.generation, logs, initial_eval


def _summary(cfg: RunConfig, run_seed: int, logs: Sequence[GenerationLog],
             initial_eval: Optional[float],
             final_eval: Optional[float] = None) -> RunSummary:
    evals = [r.eval_return for r in logs if r.eval_return is not None]
    if final_eval is not None:
        evals.append(final_eval)
    return RunSummary(
        env=cfg.env_name,
        optimizer=cfg.optimizer,
        pop_size=cfg.pop_size,
        run_seed=run_seed,
        generations=len(logs),
        initial_eval=initial_eval,
        final_eval=evals[-1] if evals else None,
        best_eval=max(evals) if evals else None,
        final_mean_return=logs[-1].mean_return if logs else None,
    )


def train(
    cfg: RunConfig,
    run_seed: Optional[int] = None,
    out_dir: Optional[Path] = None,
    resume: bool = False,
    show_progress: bool = True,
) -> TrainResult:
    """
    Run cfg.generations generations, evaluating every cfg.eval_every and at the end.

    Only cadence evaluations go into run.csv; an end-of-run evaluation off the
    cadence lands in summary.json alone, so a resumed run.csv matches an
    uninterrupted one. Writes config.json, run.csv, timing.csv, checkpoint.bin
    (after every generation) and summary.json into <out_dir>/<env>-<optimizer>-n<N>-seed<k>/.

    Raises:
        CheckpointError: resume against an incompatible checkpoint
        RolloutError: a rollout failed (state on disk stays at the last generation)
        OSError: a file could not be written (message names the path)
    """
    seed = cfg.seeds[0] if run_seed is None else run_seed
    root = Path(out_dir) if out_dir is not None else Path(cfg.log_dir)
    run_dir = root / run_dir_name(cfg.env_name, cfg.optimizer, cfg.pop_size, seed)

    pool = _make_pool(cfg)
    try:
        if resume and (run_dir / CHECKPOINT_FILENAME).exists():
            params, start, logs, initial_eval = _resume(cfg, run_dir, seed)
        else:
            if resume:
                logger.warning("No checkpoint in %s, starting fresh", run_dir)
            params, start, logs = initial_params(cfg, seed), 0, []
            initial_eval = evaluate_policy(params, cfg, seed, pool=pool)
            build_summary(run_dir, _summary(cfg, seed, logs, initial_eval))
        save_run_config(run_dir, cfg)

        bar = tqdm(range(start, cfg.generations), desc=run_dir.name, unit="gen",
                   initial=start, total=cfg.generations, disable=not show_progress)
        for g in bar:
            params, row = run_generation(params, cfg, g, seed, pool)
            if (g + 1) % cfg.eval_every == 0:
                row = row.model_copy(
                    update={"eval_return": evaluate_policy(params, cfg, seed, pool=pool)})
            logs.append(row)
            write_run_log(run_dir, logs)
            save_checkpoint(run_dir, _header(cfg, params, g + 1, seed),
                            params if cfg.optimizer == "es" else params.probs)
            bar.set_postfix(mean=f"{row.mean_return:.3g}", energy=f"{row.grad_energy:.3g}")

        final_eval = logs[-1].eval_return if logs else None
        if logs and final_eval is None:
            final_eval = evaluate_policy(params, cfg, seed, pool=pool)
    finally:
        if pool is not None:
            pool.shutdown()

    summary = _summary(cfg, seed, logs, initial_eval, final_eval)
    build_summary(run_dir, summary)
    return TrainResult(params=params, logs=logs, run_dir=run_dir, summary=summary)


# ---------- Sweep ----------

def sweep(
    cfg: RunConfig,
    pops: Sequence[int],
    optimizers: Sequence[str],
    out_dir: Optional[Path] = None,
) -> List[SweepRow]:
    """
    Train every (optimizer, N, seed) combination and summarize per (optimizer, N).

    degradation compares each N with the largest N of the same optimizer.
    """
    if not pops:
        raise ValueError("sweep needs at least one population size")
    root = Path(out_dir) if out_dir is not None else Path(cfg.log_dir)
    rows: List[SweepRow] = []
    for opt in optimizers:
        medians: Dict[int, float] = {}
        for n in sorted(set(pops)):
            cell = cfg.with_overrides(optimizer=opt, pop_size=n)
            finals = []
            for seed in cfg.seeds:
                result = train(cell, seed, root, show_progress=False)
                finals.append(result.summary.final_eval)
            medians[n] = float(np.median(finals))
            logger.info("sweep %s N=%d: median final eval %.4g", opt, n, medians[n])
        ref = medians[max(medians)]
        for n, med in medians.items():
            degradation = (ref - med) / abs(ref) if ref != 0 else 0.0
            rows.append(SweepRow(optimizer=opt, pop_size=n, seeds=len(cfg.seeds),
                                 median_final_eval=med, degradation=degradation))
    write_sweep(root, rows)
    return rows
