import os

import numpy as np
import pytest

from mimoq import cli, envs_data as ed
from mimoq import policy as pol, rank_one_net as ron


@pytest.fixture()
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_small_dataset(path, env_id="reach1d-v0", tier="expert", n=300,
                        seed=0):
    ds = ed.generate_dataset(env_id, tier, n, seed)
    ed.save_dataset(ds, path)
    return ds


class TestConfigFile:
    def test_parse_types_and_comments(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# a comment\n"
            "steps = 100\n"
            "lr=0.001  # trailing comment\n"
            "tier=medium\n"
            "\n")
        values = cli.load_config_file(cfg)
        assert values == {"steps": 100, "lr": 0.001, "tier": "medium"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(cli.UsageError):
            cli.load_config_file(tmp_path / "nope.cfg")

    def test_bad_line(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("steps 100\n")
        with pytest.raises(cli.UsageError, match="bad.cfg:1"):
            cli.load_config_file(cfg)


class TestMergeConfig:
    DEFAULTS = {"a": 1, "b": "x"}

    def test_precedence_flags_over_file_over_defaults(self):
        merged = cli.merge_config(self.DEFAULTS, {"a": 2, "b": "y"}, {"b": "z"})
        assert merged == {"a": 2, "b": "z"}

    def test_none_flags_ignored(self):
        merged = cli.merge_config(self.DEFAULTS, {}, {"a": None, "b": None})
        assert merged == self.DEFAULTS

    def test_unknown_key_rejected(self):
        with pytest.raises(cli.UsageError):
            cli.merge_config(self.DEFAULTS, {"c": 3}, {})


class TestDefaults:
    def test_default_beta_by_tier(self):
        assert cli.default_beta("expert") == 100.0
        assert cli.default_beta("medium_expert") == 100.0
        for tier in ("random", "medium", "medium_replay"):
            assert cli.default_beta(tier) == 0.0

    def test_default_dataset_path(self):
        assert cli.default_dataset_path("reach1d", "medium") == \
            "reach1d-medium.jsonl"


class TestGenData:
    def test_writes_dataset(self, in_tmp):
        rc = cli.main(["gen-data", "--env", "reach1d-v0", "--tier", "random",
                       "--n", "200", "--seed", "1"])
        assert rc == 0
        ds = ed.load_dataset("reach1d-random.jsonl")
        assert len(ds) == 200 and ds.tier == "random"

    def test_bad_tier_exits_2(self, in_tmp):
        rc = cli.main(["gen-data", "--tier", "bogus", "--n", "10"])
        assert rc == 2


class TestTrainEval:
    def test_train_then_eval(self, in_tmp):
        write_small_dataset("reach1d-expert.jsonl")
        rc = cli.main(["train", "--env", "reach1d", "--tier", "expert",
                       "--steps", "30", "--k", "3", "--batch-size", "16",
                       "--hidden", "8,8", "--log-interval", "10",
                       "--eval-interval", "10", "--eval-episodes", "2"])
        assert rc == 0
        assert os.path.exists("checkpoint-critic.bin")
        assert os.path.exists("checkpoint-policy.bin")
        assert os.path.exists("metrics.csv")
        critic = ron.load_network("checkpoint-critic.bin")
        assert critic.k == 3
        actor = pol.load_policy("checkpoint-policy.bin")
        assert actor.action_dim == 1

        rc = cli.main(["eval", "--policy", "checkpoint-policy.bin",
                       "--env", "reach1d-v0", "--episodes", "2"])
        assert rc == 0

    def test_missing_dataset_exits_2(self, in_tmp):
        rc = cli.main(["train", "--env", "reach1d", "--tier", "medium",
                       "--steps", "5"])
        assert rc == 2

    def test_config_file_overridden_by_flag(self, in_tmp):
        write_small_dataset("reach1d-expert.jsonl")
        cfg = in_tmp / "run.cfg"
        cfg.write_text("steps=10\nk=2\nbatch_size=8\nhidden=8,8\n"
                       "log_interval=5\neval_interval=5\neval_episodes=1\n")
        rc = cli.main(["train", "--config", str(cfg), "--k", "4"])
        assert rc == 0
        assert ron.load_network("checkpoint-critic.bin").k == 4

    def test_unknown_config_key_exits_2(self, in_tmp):
        cfg = in_tmp / "run.cfg"
        cfg.write_text("stepz=10\n")
        rc = cli.main(["train", "--config", str(cfg)])
        assert rc == 2

    def test_eval_missing_policy_exits_2(self, in_tmp):
        rc = cli.main(["eval", "--policy", "missing.bin"])
        assert rc == 2


class TestBenchCommand:
    def test_writes_csv(self, in_tmp):
        rc = cli.main(["bench", "--k-list", "1,2", "--dims", "5,16,16,1",
                       "--batch", "8", "--repeats", "3", "--out", "b.csv"])
        assert rc == 0
        with open("b.csv") as fh:
            lines = fh.read().splitlines()
        assert lines[0].split(",")[0] == "K"
        assert len(lines) == 3


class TestRegressCommand:
    def test_writes_csv(self, in_tmp):
        rc = cli.main(["regress", "--steps", "20", "--k", "3",
                       "--hidden", "8,8", "--batch", "16",
                       "--n-train", "100", "--out", "r.csv"])
        assert rc == 0
        with open("r.csv") as fh:
            header = fh.readline().strip().split(",")
        assert header[:3] == ["x", "mean", "std"]


class TestAblateCommand:
    def test_components_grid(self, in_tmp):
        write_small_dataset("reach1d-medium_expert.jsonl",
                            tier="medium_expert")
        rc = cli.main(["ablate", "components", "--env", "reach1d",
                       "--tier", "medium_expert", "--steps", "10",
                       "--batch-size", "8", "--hidden", "8,8", "--k", "2",
                       "--eval-episodes", "1", "--out", "a.csv"])
        assert rc == 0
        with open("a.csv") as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 5  # header + 2x2 grid
