"""Config parsing: closed registries, coercion, canonical echo."""

import pytest

from prompt_das.config import (
    REGISTRY,
    canonical_text,
    default_out_dir,
    parse_config_text,
    read_config_file,
    resolve,
)
from prompt_das.errors import BadConfig


class TestParse:
    def test_basic_lines(self):
        raw = parse_config_text("a = 1\nb.c = hello world \n")
        assert raw == {"a": "1", "b.c": "hello world"}

    def test_comments_and_blanks(self):
        raw = parse_config_text("# top\n\na = 1  # trailing\n")
        assert raw == {"a": "1"}

    def test_value_may_contain_equals(self):
        assert parse_config_text("a = x=y")["a"] == "x=y"

    def test_missing_equals(self):
        with pytest.raises(BadConfig, match="key = value"):
            parse_config_text("just some words\n")

    def test_duplicate_key(self):
        with pytest.raises(BadConfig, match="duplicate"):
            parse_config_text("a = 1\na = 2\n")

    def test_empty_key(self):
        with pytest.raises(BadConfig):
            parse_config_text("= 2\n")

    def test_file_not_found(self, tmp_path):
        with pytest.raises(BadConfig):
            read_config_file(tmp_path / "none.cfg")


class TestResolve:
    def test_defaults_fill_in(self):
        cfg = resolve("synth", {"scenario": "gait6"})
        assert cfg["scenario"] == "gait6"
        assert cfg["seed"] == 0
        assert cfg["image_size"] == 32
        assert cfg["keep_raw"] is False
        assert cfg["train_per_class"] is None

    def test_unknown_key_rejected(self):
        with pytest.raises(BadConfig, match="unknown config key"):
            resolve("synth", {"scenario": "gait6", "scnario": "typo"})

    def test_unknown_command(self):
        with pytest.raises(BadConfig, match="unknown command"):
            resolve("train", {})

    def test_missing_required(self):
        with pytest.raises(BadConfig, match="missing required"):
            resolve("synth", {})

    def test_type_coercion(self):
        cfg = resolve("finetune", {
            "data": "d", "checkpoint": "c", "schedule.base_lr": "0.25",
            "vpt.carry_prompt_outputs": "true",
            "grid.base_lrs": "0.1,0.5,1.0",
        })
        assert cfg["schedule.base_lr"] == 0.25
        assert cfg["vpt.carry_prompt_outputs"] is True
        assert cfg["grid.base_lrs"] == (0.1, 0.5, 1.0)

    def test_bad_value(self):
        with pytest.raises(BadConfig, match="schedule.epochs"):
            resolve("finetune", {"data": "d", "checkpoint": "c",
                                 "schedule.epochs": "many"})
        with pytest.raises(BadConfig):
            resolve("finetune", {"data": "d", "checkpoint": "c",
                                 "vpt.carry_prompt_outputs": "maybe"})

    def test_overrides_win(self):
        cfg = resolve("synth", {"scenario": "gait6", "seed": "1"},
                      overrides={"seed": "7"})
        assert cfg["seed"] == 7

    def test_override_unknown_key_rejected(self):
        with pytest.raises(BadConfig):
            resolve("synth", {"scenario": "gait6"}, overrides={"sed": "7"})

    def test_every_command_has_registry(self):
        assert set(REGISTRY) == {
            "synth", "preprocess", "pretrain", "finetune", "eval", "sweep", "report"
        }


class TestCanonicalEcho:
    def test_round_trips_through_parser(self):
        cfg = resolve("pretrain", {"data": "pool", "schedule.epochs": "3"})
        text = canonical_text(cfg)
        reparsed = resolve("pretrain", parse_config_text(text))
        assert reparsed == cfg
        assert canonical_text(reparsed) == text

    def test_sorted_and_stable(self):
        text = canonical_text({"b": 2, "a": 1})
        assert text == "a = 1\nb = 2\n"

    def test_none_values_skipped(self):
        assert canonical_text({"a": None, "b": 1}) == "b = 1\n"

    def test_tuples_flatten_to_commas(self):
        assert canonical_text({"xs": (1, 5, 10)}) == "xs = 1,5,10\n"


class TestOutDir:
    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv("PROMPT_DAS_OUT", "/elsewhere")
        assert str(default_out_dir("given", "synth")) == "given"

    def test_env_root(self, monkeypatch):
        monkeypatch.setenv("PROMPT_DAS_OUT", "/data/out")
        assert str(default_out_dir(None, "synth")) == "/data/out/synth"

    def test_fallback(self, monkeypatch):
        monkeypatch.delenv("PROMPT_DAS_OUT", raising=False)
        assert str(default_out_dir(None, "eval")) == "runs/eval"
