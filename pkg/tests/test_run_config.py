import pytest

from core.run_config import ConfigError, RunConfig, load_run_config, parse_flat
from core.rsnn import Topology


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadRunConfig:
    def test_flat_file_with_sections(self, tmp_path):
        cfg = load_run_config(_write(tmp_path, "\n".join([
            "# pole balance smoke run",
            "env=pole_balance",
            "optimizer=ec_tr",
            "pop_size=64",
            "generations=20",
            "seeds=0, 1,2",
            "tr.delta_per_param=0.005",
            "topology.d_h=32",
            "env.horizon=250",
        ])))
        assert cfg.env_name == "pole_balance"
        assert cfg.optimizer == "ec_tr"
        assert cfg.pop_size == 64
        assert cfg.seeds == [0, 1, 2]
        assert cfg.tr.delta_per_param == 0.005
        assert cfg.topology.d_h == 32
        assert cfg.build_env().horizon == 250

    def test_overrides_win(self, tmp_path):
        cfg = load_run_config(_write(tmp_path, "optimizer=satr\n"), optimizer="ec", workers=None)
        assert cfg.optimizer == "ec"

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_config(tmp_path / "absent.cfg")

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(_write(tmp_path, "population=12\n"))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(_write(tmp_path, "adam.lr=0.1\n"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(_write(tmp_path, "pop_size=1\n"))

    def test_substep_pattern(self):
        nested = parse_flat({"topology.substep_pattern": "33,33,34"})
        assert nested == {"topology": {"substep_pattern": ["33", "33", "34"]}}


class TestRunConfig:
    def test_direct_default_for_pattern_match(self):
        assert RunConfig(env="pattern_match").is_direct
        assert not RunConfig(env="pattern_match", direct=False).is_direct
        assert not RunConfig(env="pointmass_reach").is_direct

    def test_direct_only_for_pattern_match(self):
        with pytest.raises(ValueError):
            RunConfig(env="pole_balance", direct=True)

    def test_es_cannot_be_direct(self):
        with pytest.raises(ValueError):
            RunConfig(env="pattern_match", optimizer="es")
        RunConfig(env="pattern_match", direct=False, optimizer="es")

    def test_empty_seeds(self):
        with pytest.raises(ValueError):
            RunConfig(seeds="")

    def test_topology_follows_env(self):
        cfg = RunConfig(env="pointmass_reach", topology=Topology(d_in=99, d_h=8, d_out=7))
        topo = cfg.resolved_topology()
        assert (topo.d_in, topo.d_h, topo.d_out) == (4, 8, 2)

    def test_search_dim(self):
        assert RunConfig(env="pattern_match", env_params={"d": 12}).search_dim() == 12
        cfg = RunConfig(env="pole_balance", topology=Topology(d_h=8))
        assert cfg.search_dim() == 4 * 8 + 8 * 8 + 8

    def test_fingerprint(self):
        base = RunConfig(env="pattern_match")
        assert base.fingerprint() == RunConfig(env="pattern_match").fingerprint()
        assert base.fingerprint() == base.with_overrides(generations=500, workers=4).fingerprint()
        assert base.fingerprint() != RunConfig(env="pattern_match", satr={"eta": 0.3}).fingerprint()

    def test_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv("SATR_WORKERS", "3")
        assert RunConfig().workers == 3

    def test_frozen(self):
        with pytest.raises(ValueError):
            RunConfig().pop_size = 3
