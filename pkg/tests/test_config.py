import json

import numpy as np
import pytest

from hgd.config import (RunConfig, default_run_config, dtype_of, load_run_config,
                        parse_run_config, to_fpn_config, to_hgd_config,
                        to_train_config)
from hgd.tensor import ConfigError


def test_defaults_mirror_reference_settings():
    run = default_run_config()
    assert run.task == "seg"
    assert run.precision == "f32"
    assert run.input_size == 512
    assert run.num_classes == 60
    assert (run.hgd.n, run.hgd.codeword_dim) == (256, 1024)
    assert (run.hgd.compressed, run.hgd.guidance, run.hgd.transfer) == (512, 1024, True)
    assert (run.fpn.n, run.fpn.c, run.fpn.k, run.fpn.share_params) == (128, 512, 4, True)
    assert run.train.max_iter == 500


def test_empty_document_gives_defaults():
    assert parse_run_config({}) == default_run_config()


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys.*lr"):
        parse_run_config({"lr": 0.1})


@pytest.mark.parametrize("section,key", [("hgd", "codewords"), ("fpn", "stages"),
                                         ("train", "lr")])
def test_unknown_nested_key_rejected_with_path(section, key):
    with pytest.raises(ConfigError, match=f"config.{section}.*{key}"):
        parse_run_config({section: {key: 1}})


def test_bad_enum_values_rejected():
    with pytest.raises(ConfigError, match="task"):
        parse_run_config({"task": "detection"})
    with pytest.raises(ConfigError, match="precision"):
        parse_run_config({"precision": "f16"})


def test_range_validation():
    with pytest.raises(ConfigError, match="seed"):
        parse_run_config({"seed": -1})
    with pytest.raises(ConfigError, match="divisible"):
        parse_run_config({"input_size": 500})
    with pytest.raises(ConfigError, match="num_classes"):
        parse_run_config({"num_classes": 1})
    with pytest.raises(ConfigError, match="max_iter"):
        parse_run_config({"train": {"max_iter": 0}})


def test_int_fields_reject_booleans_and_strings():
    with pytest.raises(ConfigError, match="seed"):
        parse_run_config({"seed": True})
    with pytest.raises(ConfigError, match="config.hgd.n"):
        parse_run_config({"hgd": {"n": "256"}})


def test_bool_field_rejects_integers():
    with pytest.raises(ConfigError, match="transfer"):
        parse_run_config({"hgd": {"transfer": 1}})


def test_float_fields_accept_integers():
    run = parse_run_config({"train": {"base_lr": 1}})
    assert run.train.base_lr == 1.0


def test_transfer_needs_matching_dims():
    with pytest.raises(ConfigError, match="guidance == codeword_dim"):
        parse_run_config({"hgd": {"guidance": 512}})
    run = parse_run_config({"hgd": {"guidance": 512, "transfer": False}})
    assert run.hgd.guidance == 512


def test_converters_map_every_field():
    run = parse_run_config({
        "hgd": {"n": 4, "codeword_dim": 16, "compressed": 8, "guidance": 16},
        "fpn": {"n": 3, "c": 7, "k": 2, "share_params": False},
        "train": {"base_lr": 0.5, "power": 0.8, "momentum": 0.7,
                  "weight_decay": 0.0, "max_iter": 9, "batch": 2},
    })
    h = to_hgd_config(run)
    assert (h.n_codewords, h.codeword_dim) == (4, 16)
    assert (h.compressed_channels, h.guidance_channels, h.transfer_enabled) == (8, 16, True)
    f = to_fpn_config(run, output_channels=6)
    assert (f.n_codewords, f.codeword_dim, f.k_recurrence) == (3, 7, 2)
    assert (f.share_params, f.output_channels) == (False, 6)
    t = to_train_config(run)
    assert (t.base_lr, t.power, t.momentum) == (0.5, 0.8, 0.7)
    assert (t.weight_decay, t.max_iter, t.batch) == (0.0, 9, 2)


def test_dtype_selection():
    assert dtype_of(RunConfig(precision="f32")) is np.float32
    assert dtype_of(RunConfig(precision="f64")) is np.float64


def test_load_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 7, "precision": "f64"}))
    run = load_run_config(path)
    assert run.seed == 7
    assert run.precision == "f64"


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(path)


def test_load_rejects_non_object(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_run_config(path)
