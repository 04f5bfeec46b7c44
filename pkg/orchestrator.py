"""
SATR Orchestrator - Main CLI
============================

Batch entry point for training, evaluation, kernel benchmarks and energy estimates.

Usage:
    python orchestrator.py train --config configs/pole_balance.cfg --seed 0
    python orchestrator.py eval --checkpoint runs/<run>/ --episodes 128
    python orchestrator.py bench --d 256 --rows 256
    python orchestrator.py energy --pop 1024,8192 --trace trace.txt
    python orchestrator.py sweep --config configs/pole_balance.cfg --pops 32,128,512 --optimizers satr,ec

Flow (train):
    1. Load flat config (+ CLI overrides)
    2. For every seed: sample population, roll out, rank, update rho
    3. Evaluate every eval_every generations
    4. Write run.csv, checkpoint.bin and summary.json per run
"""

import logging
import os
import sys
from pathlib import Path

# Load environment variables BEFORE importing core modules
from dotenv import load_dotenv
load_dotenv()

from core import (
    CheckpointError,
    ConfigError,
    EnergyParams,
    RolloutError,
    energy_per_rollout,
    energy_table,
    evaluate_policy,
    load_checkpoint,
    load_run_config,
    load_saved_run_config,
    measured_spike_rate,
    model_footprint,
    sweep,
    train,
)
from core.bitset_engine import BENCH_CSV_HEADER, bench_kernel
from core.energy_estimator import GPU_REFERENCE_J, TABLE_POPULATIONS, load_spike_trace, write_spike_trace
from core.runner import params_from_checkpoint, record_spike_trace


def _ints(text: str):
    return [int(x) for x in text.split(",") if x.strip()]


def _setup_logging(verbose: bool) -> None:
    # Configure logging to show warnings/errors to stderr
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('   %(levelname)s: %(message)s'))
    logger = logging.getLogger('core')
    default = os.getenv("SATR_LOG_LEVEL", "WARNING").upper()
    logger.setLevel(logging.DEBUG if verbose else getattr(logging, default, logging.WARNING))
    if not logger.handlers:  # Avoid duplicate handlers
        logger.addHandler(handler)


# ---------- Subcommands ----------

def cmd_train(args) -> int:
    cfg = load_run_config(args.config, optimizer=args.optimizer, workers=args.workers)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    out = Path(args.out) if args.out else Path(cfg.log_dir)

    print(f"\n🧠 Training {cfg.optimizer} on {cfg.env_name} "
          f"(N={cfg.pop_size}, G={cfg.generations}, d={cfg.search_dim()}, engine={cfg.engine})")
    for seed in seeds:
        result = train(cfg, seed, out, resume=args.resume)
        s = result.summary
        print(f"\n✅ Seed {seed} done:")
        print(f"   Run dir:      {result.run_dir}")
        print(f"   Initial eval: {s.initial_eval}")
        print(f"   Final eval:   {s.final_eval}")
        print(f"   Best eval:    {s.best_eval}")
    return 0


def cmd_eval(args) -> int:
    if args.config:
        cfg = load_run_config(args.config)
    else:
        # train writes config.json next to checkpoint.bin
        cfg = load_saved_run_config(Path(args.checkpoint))
    header, vec = load_checkpoint(Path(args.checkpoint))
    if header.fingerprint != cfg.fingerprint():
        print("⚠️  Checkpoint was written with a different configuration; results may not be comparable")
    if args.eval_mode:
        cfg = cfg.with_overrides(eval_mode=args.eval_mode)
    params = params_from_checkpoint(header, vec)

    print(f"\n🎯 Evaluating {args.checkpoint} (generation {header.generation}, "
          f"{args.episodes} episodes, mode={cfg.eval_mode})")
    value = evaluate_policy(params, cfg, header.run_seed, episodes=args.episodes)
    print(f"   Mean return: {value:.6g}")

    if args.trace_out:
        trace = record_spike_trace(params, cfg, header.run_seed)
        path = write_spike_trace(Path(args.trace_out), trace)
        print(f"   Spike trace: {path} (rate={measured_spike_rate(trace):.4f})")
    return 0


def cmd_bench(args) -> int:
    print(BENCH_CSV_HEADER)
    for d in _ints(args.d):
        for rows in _ints(args.rows):
            print(bench_kernel(d, rows, reps=args.reps, word_bits=args.word_bits).csv_row())
    return 0


def cmd_energy(args) -> int:
    params = EnergyParams()
    pops = _ints(args.pop) if args.pop else list(TABLE_POPULATIONS)

    print(f"\n⚡ Energy per rollout: {energy_per_rollout(params) * 1e3:.4f} mJ "
          f"(R={params.spike_rate})")
    variants = [("assumed R", params)]
    if args.trace:
        rate = measured_spike_rate(load_spike_trace(Path(args.trace)))
        measured = params.model_copy(update={"spike_rate": rate})
        print(f"   Measured R={rate:.4f} -> {energy_per_rollout(measured) * 1e3:.4f} mJ per rollout")
        variants.append(("measured R", measured))

    print(f"\n   {'Population size':<22}" + "".join(f"{p:>10}" for p in pops))
    for label, p in variants:
        rows = energy_table(p, pops)
        print(f"   {'On-chip [kJ] ' + label:<22}" + "".join(f"{r.total_kj:>10.2f}" for r in rows))
        print(f"   {'vs GPU (x lower)':<22}" + "".join(f"{r.gpu_ratio:>10.0f}" for r in rows))
    print(f"   GPU reference: {GPU_REFERENCE_J / 1e6:.1f} MJ (measured)")

    if args.config:
        cfg = load_run_config(args.config)
        fp = model_footprint(cfg.resolved_topology())
        print(f"\n💾 Footprint: {fp.params} synapses, {fp.bytes_1bit / 1024:.1f} KB at 1 bit "
              f"vs {fp.bytes_fp32 / 1024:.1f} KB at FP32 ({fp.ratio:.0f}x)")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_run_config(args.config, workers=args.workers)
    out = Path(args.out) if args.out else Path(cfg.log_dir)
    optimizers = [o.strip() for o in args.optimizers.split(",") if o.strip()]
    pops = _ints(args.pops)

    print(f"\n🔬 Sweep on {cfg.env_name}: optimizers={optimizers} N={pops} seeds={cfg.seeds}")
    rows = sweep(cfg, pops, optimizers, out)
    print(f"\n   {'optimizer':<8} {'N':>6} {'median final':>14} {'degradation':>12}")
    for r in rows:
        print(f"   {r.optimizer:<8} {r.pop_size:>6} {r.median_final_eval:>14.4g} {r.degradation:>12.3f}")
    print(f"\n✅ Wrote {out / 'sweep.csv'}")
    return 0


def main():
    import argparse

    parser = argparse.ArgumentParser(
        description="SATR: signal-adaptive trust-region training of binary-connectivity spiking policies",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Train SATR on pole balancing with three seeds from the config
  python orchestrator.py train --config configs/pole_balance.cfg

  # Same run with the plain EC baseline, 8 rollout threads
  python orchestrator.py train --config configs/pole_balance.cfg --optimizer ec --workers 8

  # Evaluate a checkpoint with thresholded connectivity and dump a spike trace
  python orchestrator.py eval --checkpoint runs/pole-balance-satr-n256-seed0 --eval-mode map --trace-out trace.txt

  # Energy table with the measured spike rate
  python orchestrator.py energy --trace trace.txt
        """
    )
    parser.add_argument("--verbose", action="store_true", help="Debug logging for core modules")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train one run per seed")
    p.add_argument("--config", required=True, help="Flat key=value run config")
    p.add_argument("--seed", type=int, default=None, help="Single seed (default: seeds from config)")
    p.add_argument("--optimizer", choices=["satr", "ec", "ec_tr", "es"], default=None)
    p.add_argument("--workers", type=int, default=None, help="Rollout threads (default: SATR_WORKERS or 1)")
    p.add_argument("--out", default=None, help="Output root (default: log_dir / SATR_OUTPUT)")
    p.add_argument("--resume", action="store_true", help="Continue from checkpoint.bin if present")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint")
    p.add_argument("--config", default=None,
                   help="Config the checkpoint was trained with (default: the run's config.json)")
    p.add_argument("--checkpoint", required=True, help="checkpoint.bin or its run directory")
    p.add_argument("--episodes", type=int, default=128)
    p.add_argument("--eval-mode", choices=["sample", "map"], default=None)
    p.add_argument("--trace-out", default=None, help="Write a spike trace of the first episode")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="AND+popcount vs dense float32 matvec")
    p.add_argument("--d", default="256", help="Comma-separated presynaptic sizes")
    p.add_argument("--rows", default="256", help="Comma-separated postsynaptic sizes")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--word-bits", type=int, choices=[32, 64], default=64)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("energy", help="Analytical on-chip training energy")
    p.add_argument("--pop", default=None, help="Comma-separated population sizes")
    p.add_argument("--trace", default=None, help="Spike trace written by eval --trace-out")
    p.add_argument("--config", default=None, help="Also print the model footprint for this config")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("sweep", help="Population-size / optimizer sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--pops", default="32,128,512")
    p.add_argument("--optimizers", default="satr,ec")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    args = parser.parse_args()
    _setup_logging(args.verbose)

    try:
        return args.func(args)
    except (FileNotFoundError, ConfigError, CheckpointError, RolloutError, ValueError, OSError) as e:
        print(f"❌ {args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
