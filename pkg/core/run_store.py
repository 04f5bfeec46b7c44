"""
Run Store
=========

Persistence for training runs: generation log, checkpoint, summary.

Features:
- run.csv: one GenerationLog row per generation, versioned header line,
  floats written with repr() so a re-read row reproduces the bytes exactly
- timing.csv: wall-clock per generation, kept apart so run.csv is reproducible
- checkpoint.bin: versioned little-endian layout (magic, version, JSON header, float64 vector)
- summary.json: per-run overview rebuilt after training
- config.json: the resolved run config, so a checkpoint can be evaluated on its own
- Atomic writes + optional file locking to avoid corruption on crash/parallel runs

checkpoint.bin layout:
    8 bytes   magic b"SATRCKPT"
    u32 LE    format version
    u32 LE    header length H
    H bytes   UTF-8 JSON CheckpointHeader
    dim * 8   float64 LE parameter vector (rho or ES weights)
"""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
import struct
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

# Optional locking to prevent concurrent writers
try:
    from filelock import FileLock
except Exception:
    FileLock = None

from pydantic import BaseModel, Field, ValidationError
from slugify import slugify

LOG_FILENAME = "run.csv"
TIMING_FILENAME = "timing.csv"
CHECKPOINT_FILENAME = "checkpoint.bin"
SUMMARY_FILENAME = "summary.json"
CONFIG_FILENAME = "config.json"

LOG_HEADER_LINE = "# satr-run-log v1"
CHECKPOINT_MAGIC = b"SATRCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Checkpoint missing pieces, wrong format or incompatible with the run."""
    pass


# ---------- Pydantic Models ----------

class GenerationLog(BaseModel):
    """One row of run.csv."""
    generation: int
    mean_return: float
    max_return: float
    eval_return: Optional[float] = None
    grad_energy: float
    step_kl: Optional[float] = None  # quadratic KL of the applied step (Bernoulli optimizers)
    no_signal: bool = False
    rho_min: Optional[float] = None
    rho_max: Optional[float] = None
    wall_ms: float = Field(default=0.0, exclude=True)


LOG_COLUMNS = [name for name, f in GenerationLog.model_fields.items() if not f.exclude]


class CheckpointHeader(BaseModel):
    """Everything needed to resume besides the vector itself."""
    schema_version: int = CHECKPOINT_VERSION
    kind: Literal["bernoulli", "es"]
    generation: int  # generations completed
    run_seed: int
    dim: int
    clamp_eps: Optional[float] = None
    fingerprint: str


class RunSummary(BaseModel):
    """summary.json contents."""
    env: str
    optimizer: str
    pop_size: int
    run_seed: int
    generations: int
    initial_eval: Optional[float] = None
    final_eval: Optional[float] = None
    best_eval: Optional[float] = None
    final_mean_return: Optional[float] = None


# ---------- Helpers ----------

def _atomic_write_bytes(target: Path, payload: bytes) -> None:
    """
    Write bytes atomically: write to temp, fsync, move.
    Prevents partial writes on crash.
    """
    target.parent.mkdir(parents=True, exist_ok=True)
    temp = target.with_suffix(target.suffix + ".tmp")
    with temp.open("wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    # Atomic replace
    try:
        os.replace(temp, target)
    except Exception:
        shutil.move(str(temp), str(target))


def _with_lock(path: Path):
    """
    Context manager that uses FileLock if available, otherwise no-op.
    """
    class Noop:
        def __enter__(self): return None
        def __exit__(self, exc_type, exc, tb): return False

    if FileLock is None:
        return Noop()

    lock_path = str(path) + ".lock"
    return FileLock(lock_path, timeout=30)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path: Path, payload: bytes) -> Path:
    try:
        with _with_lock(path):
            _atomic_write_bytes(path, payload)
    except OSError as e:
        raise OSError(f"Could not write {path}: {e}") from e
    return path


# ---------- Public API ----------

def run_dir_name(env: str, optimizer: str, pop_size: int, seed: int) -> str:
    """Directory name for one (env, optimizer, N, seed) run."""
    return slugify(f"{env} {optimizer} n{pop_size} seed{seed}")


def write_run_log(run_dir: Path, rows: Sequence[GenerationLog]) -> Path:
    """Rewrite run.csv and timing.csv from the full row list."""
    buf = io.StringIO()
    buf.write(LOG_HEADER_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for row in rows:
        data = row.model_dump()
        writer.writerow([_fmt(data[c]) for c in LOG_COLUMNS])
    path = _write(run_dir / LOG_FILENAME, buf.getvalue().encode("utf-8"))

    timing = "generation,wall_ms\n" + "".join(
        f"{row.generation},{row.wall_ms:.3f}\n" for row in rows)
    _write(run_dir / TIMING_FILENAME, timing.encode("utf-8"))
    return path


def read_run_log(run_dir: Path) -> List[GenerationLog]:
    """
    Load run.csv rows.

    Raises:
        FileNotFoundError if run.csv doesn't exist
        ValueError if the header or a row is invalid
    """
    path = run_dir / LOG_FILENAME
    if not path.exists():
        raise FileNotFoundError(f"Run log not found at {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != LOG_HEADER_LINE:
        raise ValueError(f"{path} does not start with '{LOG_HEADER_LINE}'")
    reader = csv.DictReader(lines[1:])
    rows: List[GenerationLog] = []
    try:
        for rec in reader:
            parsed = {k: (None if v == "" else v) for k, v in rec.items()}
            rows.append(GenerationLog(**parsed))
    except ValidationError as e:
        raise ValueError(f"Invalid run log row at {path}:\n{e}") from e

    timing_path = run_dir / TIMING_FILENAME
    if timing_path.exists():
        timing = {}
        for rec in csv.DictReader(timing_path.read_text(encoding="utf-8").splitlines()):
            timing[int(rec["generation"])] = float(rec["wall_ms"])
        rows = [r.model_copy(update={"wall_ms": timing.get(r.generation, 0.0)}) for r in rows]
    return rows


def save_checkpoint(run_dir: Path, header: CheckpointHeader, vector: np.ndarray) -> Path:
    """Write checkpoint.bin atomically with optional file lock."""
    vec = np.asarray(vector, dtype="<f8").reshape(-1)
    if vec.size != header.dim:
        raise CheckpointError(f"vector has {vec.size} entries, header says {header.dim}")
    head = header.model_dump_json().encode("utf-8")
    payload = (CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(head))
               + head + vec.tobytes())
    return _write(run_dir / CHECKPOINT_FILENAME, payload)


def load_checkpoint(path: Path) -> Tuple[CheckpointHeader, np.ndarray]:
    """
    Read a checkpoint file (or the checkpoint inside a run directory).

    Raises:
        FileNotFoundError if missing
        CheckpointError if the layout or version doesn't match
    """
    path = Path(path)
    if path.is_dir():
        path = path / CHECKPOINT_FILENAME
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found at {path}")
    blob = path.read_bytes()
    fixed = len(CHECKPOINT_MAGIC) + 8
    if len(blob) < fixed or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, head_len = struct.unpack("<II", blob[len(CHECKPOINT_MAGIC):fixed])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = CheckpointHeader(**json.loads(blob[fixed:fixed + head_len].decode("utf-8")))
    except (ValueError, ValidationError) as e:
        raise CheckpointError(f"Invalid checkpoint header at {path}: {e}") from e
    body = blob[fixed + head_len:]
    if len(body) != 8 * header.dim:
        raise CheckpointError(
            f"{path}: expected {header.dim} float64 values, found {len(body)} bytes")
    vec = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return header, vec


def build_summary(run_dir: Path, summary: RunSummary) -> Path:
    """Build or rebuild summary.json for a run."""
    out = run_dir / SUMMARY_FILENAME
    payload = json.dumps(summary.model_dump(), ensure_ascii=False, indent=2)
    return _write(out, payload.encode("utf-8"))


def load_summary(run_dir: Path) -> RunSummary:
    path = run_dir / SUMMARY_FILENAME
    if not path.exists():
        raise FileNotFoundError(f"Summary not found at {path}")
    return RunSummary(**json.loads(path.read_text(encoding="utf-8")))


def save_run_config(run_dir: Path, config: BaseModel) -> Path:
    """Write the resolved run config as config.json next to the checkpoint."""
    payload = config.model_dump_json(by_alias=True, indent=2)
    return _write(run_dir / CONFIG_FILENAME, payload.encode("utf-8"))


def load_run_config_dict(path: Path) -> dict:
    """
    Read config.json from a run directory (or the directory of a checkpoint file).
    Validation into a RunConfig is left to the caller.
    """
    path = Path(path)
    if path.is_file():
        path = path.parent
    cfg_path = path / CONFIG_FILENAME
    if not cfg_path.exists():
        raise FileNotFoundError(f"Run config not found at {cfg_path}")
    try:
        return json.loads(cfg_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{cfg_path}: unreadable run config: {e}") from e


class SweepRow(BaseModel):
    """Median final eval return of one (optimizer, N) cell over seeds."""
    optimizer: str
    pop_size: int
    seeds: int
    median_final_eval: float
    # (median at largest N - median here) / |median at largest N|
    degradation: float


SWEEP_FILENAME = "sweep.csv"


def write_sweep(root_dir: Path, rows: Sequence[SweepRow]) -> Path:
    """Write sweep.csv under the output root."""
    columns = list(SweepRow.model_fields)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        data = row.model_dump()
        writer.writerow([_fmt(data[c]) for c in columns])
    return _write(root_dir / SWEEP_FILENAME, buf.getvalue().encode("utf-8"))

