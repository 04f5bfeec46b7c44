import struct

import numpy as np
import pytest

from core.run_store import (
    CHECKPOINT_FILENAME,
    CHECKPOINT_MAGIC,
    CONFIG_FILENAME,
    LOG_COLUMNS,
    LOG_HEADER_LINE,
    CheckpointError,
    CheckpointHeader,
    GenerationLog,
    RunSummary,
    SweepRow,
    build_summary,
    load_checkpoint,
    load_run_config_dict,
    load_summary,
    read_run_log,
    run_dir_name,
    save_checkpoint,
    save_run_config,
    write_run_log,
    write_sweep,
)


def _rows():
    return [
        GenerationLog(generation=0, mean_return=-4.9, max_return=-1.0, grad_energy=0.031,
                      step_kl=0.1 ** 2 / 3, rho_min=0.42, rho_max=0.58, wall_ms=12.5),
        GenerationLog(generation=1, mean_return=-3.0, max_return=0.0, eval_return=-2.75,
                      grad_energy=0.0, step_kl=0.0, no_signal=True, wall_ms=8.0),
    ]


def _header(dim=5, **overrides):
    base = dict(kind="bernoulli", generation=3, run_seed=7, dim=dim, clamp_eps=1e-3,
                fingerprint="abc123")
    base.update(overrides)
    return CheckpointHeader(**base)


# ============================================================================
# run.csv
# ============================================================================

class TestRunLog:
    def test_header_and_columns(self, tmp_path):
        path = write_run_log(tmp_path, _rows())
        lines = path.read_text().splitlines()
        assert lines[0] == LOG_HEADER_LINE
        assert lines[1].split(",") == LOG_COLUMNS
        assert "wall_ms" not in LOG_COLUMNS
        assert len(lines) == 4

    def test_read_back(self, tmp_path):
        write_run_log(tmp_path, _rows())
        loaded = read_run_log(tmp_path)
        for got, want in zip(loaded, _rows()):
            assert got.model_dump() == want.model_dump()
            assert got.wall_ms == pytest.approx(want.wall_ms)

    def test_rewrite_is_byte_stable(self, tmp_path):
        first = write_run_log(tmp_path / "a", _rows()).read_bytes()
        second = write_run_log(tmp_path / "b", read_run_log(tmp_path / "a")).read_bytes()
        assert first == second

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_run_log(tmp_path)

    def test_foreign_file(self, tmp_path):
        (tmp_path / "run.csv").write_text("generation,mean_return\n0,1.0\n")
        with pytest.raises(ValueError):
            read_run_log(tmp_path)

    def test_bad_row(self, tmp_path):
        path = write_run_log(tmp_path, _rows())
        path.write_text(path.read_text().replace("-4.9", "lots"))
        with pytest.raises(ValueError):
            read_run_log(tmp_path)


# ============================================================================
# checkpoint.bin
# ============================================================================

class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        vec = rng.uniform(0.001, 0.999, 5)
        save_checkpoint(tmp_path, _header(), vec)
        header, loaded = load_checkpoint(tmp_path)
        assert header == _header()
        assert np.array_equal(loaded, vec)

    def test_accepts_file_path(self, tmp_path):
        save_checkpoint(tmp_path, _header(dim=2), np.array([0.25, 0.75]))
        _, loaded = load_checkpoint(tmp_path / CHECKPOINT_FILENAME)
        assert loaded.tolist() == [0.25, 0.75]

    def test_layout(self, tmp_path):
        path = save_checkpoint(tmp_path, _header(dim=1), np.array([0.5]))
        blob = path.read_bytes()
        assert blob[:8] == CHECKPOINT_MAGIC
        version, head_len = struct.unpack("<II", blob[8:16])
        assert version == 1
        assert len(blob) == 16 + head_len + 8
        assert struct.unpack("<d", blob[-8:])[0] == 0.5

    def test_dim_mismatch_on_save(self, tmp_path):
        with pytest.raises(CheckpointError):
            save_checkpoint(tmp_path, _header(dim=4), np.zeros(3))

    def test_bad_magic(self, tmp_path):
        (tmp_path / CHECKPOINT_FILENAME).write_bytes(b"NOTACKPT" + bytes(16))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_truncated(self, tmp_path):
        path = save_checkpoint(tmp_path, _header(), np.full(5, 0.5))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_future_version(self, tmp_path):
        path = save_checkpoint(tmp_path, _header(), np.full(5, 0.5))
        blob = bytearray(path.read_bytes())
        blob[8:12] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path)


# ============================================================================
# naming, summary, sweep
# ============================================================================

class TestRunDirectory:
    def test_run_dir_name(self):
        assert run_dir_name("pole_balance", "satr", 256, 0) == "pole-balance-satr-n256-seed0"
        assert run_dir_name("pointmass_reach", "ec_tr", 32, 4) == "pointmass-reach-ec-tr-n32-seed4"

    def test_summary_round_trip(self, tmp_path):
        summary = RunSummary(env="pattern_match", optimizer="satr", pop_size=16, run_seed=1,
                             generations=3, initial_eval=-5.0, final_eval=-1.0, best_eval=-1.0,
                             final_mean_return=-1.5)
        build_summary(tmp_path, summary)
        assert load_summary(tmp_path) == summary

    def test_run_config_round_trip(self, tmp_path):
        path = save_run_config(tmp_path, _header())
        assert path.name == CONFIG_FILENAME
        assert load_run_config_dict(tmp_path) == _header().model_dump()

    def test_run_config_from_checkpoint_path(self, tmp_path):
        save_run_config(tmp_path, _header())
        path = save_checkpoint(tmp_path, _header(), np.full(5, 0.5))
        assert load_run_config_dict(path)["fingerprint"] == "abc123"

    def test_run_config_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_config_dict(tmp_path)

    def test_run_config_unreadable(self, tmp_path):
        (tmp_path / CONFIG_FILENAME).write_text("{not json")
        with pytest.raises(ValueError):
            load_run_config_dict(tmp_path)

    def test_sweep_csv(self, tmp_path):
        path = write_sweep(tmp_path, [
            SweepRow(optimizer="satr", pop_size=32, seeds=3, median_final_eval=-2.0, degradation=1.0),
            SweepRow(optimizer="satr", pop_size=512, seeds=3, median_final_eval=-1.0, degradation=0.0),
        ])
        lines = path.read_text().splitlines()
        assert lines[0] == "optimizer,pop_size,seeds,median_final_eval,degradation"
        assert lines[2] == "satr,512,3,-1.0,0.0"
