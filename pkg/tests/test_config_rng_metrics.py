import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvqhl.config import (ConfigError, ExperimentConfig, desk_config, dump_text, load_config,
                          parse_text, parse_value)
from nvqhl.metrics import dice_iou, mae, rmse, summarize_frame
from nvqhl.rng import STREAMS, stream


# -- config --------------------------------------------------------------------

def test_defaults_match_reference_setting():
    cfg = ExperimentConfig()
    assert (cfg.grid.height, cfg.grid.width, cfg.grid.window) == (60, 60, 6)
    assert (cfg.grid.stride_row, cfg.grid.stride_col) == (2, 2)
    assert cfg.truth.B_base == 50e-6 and cfg.truth.B_amp == 5e-6 and cfg.truth.J_true == 5e3
    assert cfg.nv.B_ref == 50e-6 and cfg.nv.gamma_abs == 28.025e9
    assert cfg.controls.K_B == 6 and cfg.controls.K_J == 6
    assert cfg.particles.n_local == 256 and cfg.run.frames == 16
    assert cfg.dice_threshold == pytest.approx(52.5e-6)


def test_dump_and_reload_roundtrip(tmp_path):
    cfg = desk_config(**{"controls.omegas": (0.0, 5e3), "aggregation.threshold": 53e-6})
    path = tmp_path / "c.cfg"
    path.write_text(dump_text(cfg))
    assert load_config(path) == cfg


def test_shipped_configs_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    assert load_config(root / "table1.cfg") == ExperimentConfig()
    assert load_config(root / "desk.cfg") == desk_config()


def test_overrides_and_parsing():
    cfg = load_config(None, {"grid.directions": "H", "particles.n_local": 12.0,
                             "controls.b_times": "4e-6, 8e-6", "controls.b_shots": "100 30"})
    assert cfg.grid.directions == ("H",)
    assert cfg.particles.n_local == 12 and isinstance(cfg.particles.n_local, int)
    assert cfg.controls.b_times == (4e-6, 8e-6) and cfg.controls.b_shots == (100, 30)
    assert parse_value("Triangular") == "Triangular" and parse_value("1e-6") == 1e-6
    assert parse_text("# c\n a.b = 3 # tail\n\n") == {"a.b": 3}


@pytest.mark.parametrize("overrides", [
    {"grid": 3}, {"grid.nope": 1}, {"nope.height": 1}, {"grid.height": "abc"},
    {"grid.window": 100}, {"particles.J_max": 1e3}, {"aggregation.profile": "Box"},
    {"controls.b_shots": (1, 2)}, {"controls.binomial_eig": 1}, {"nv.drive_form": "Z"},
    {"truth.B_amp": "x"}, {"particles.refresh_fraction": 1.0},
])
def test_invalid_overrides(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_bad_config_file(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("grid.height 3\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


# -- random streams --------------------------------------------------------------

def test_streams_reproducible_and_independent():
    a = stream(1, "measurement", 3, 4).random(5)
    assert np.array_equal(a, stream(1, "measurement", 3, 4).random(5))
    assert not np.array_equal(a, stream(1, "measurement", 3, 5).random(5))
    assert not np.array_equal(a, stream(1, "rejuvenation", 3, 4).random(5))
    assert not np.array_equal(a, stream(2, "measurement", 3, 4).random(5))
    assert len(set(STREAMS.values())) == len(STREAMS)
    with pytest.raises(KeyError):
        stream(1, "other")
    with pytest.raises(ValueError):
        stream(1, "measurement", -1)


# -- metrics -----------------------------------------------------------------------

@given(st.floats(-1e-6, 1e-6))
@settings(max_examples=30)
def test_offset_errors(delta):
    B = np.full((4, 5), 50e-6)
    assert rmse(B, B) == 0 and mae(B, B) == 0
    assert rmse(B + delta, B) == pytest.approx(abs(delta), rel=1e-9, abs=1e-20)
    assert mae(B + delta, B) == pytest.approx(abs(delta), rel=1e-9, abs=1e-20)


def test_metric_shape_mismatch():
    with pytest.raises(ValueError):
        rmse(np.zeros(3), np.zeros(4))


def test_dice_iou_cases():
    a = np.zeros(400)
    a[:100] = 1
    assert dice_iou(a, a, 0.5) == (1.0, 1.0)
    b = np.zeros(400)
    b[200:300] = 1
    assert dice_iou(a, b, 0.5) == (0.0, 0.0)
    c = np.zeros(400)
    c[20:120] = 1
    d, i = dice_iou(a, c, 0.5)
    assert d == pytest.approx(0.8) and i == pytest.approx(80 / 120)
    assert dice_iou(np.zeros(5), np.zeros(5), 0.5) == (1.0, 1.0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_dice_dominates_iou(seed):
    rng = np.random.default_rng(seed)
    d, i = dice_iou(rng.random((6, 6)), rng.random((6, 6)), 0.5)
    assert 0 <= i <= d <= 1
    assert d == pytest.approx(2 * i / (1 + i))


def test_frame_summary():
    B = np.full((3, 3), 55e-6)
    s = summarize_frame(4, B + 1e-7, B, 52.5e-6, 5.1e3, 90.0, 5e3)
    assert s.frame == 4 and s.rmse_T == pytest.approx(1e-7) and s.dice == 1.0
    assert s.J_bias_Hz == pytest.approx(100.0)
    assert set(s.to_dict()) == {"frame", "rmse_T", "mae_T", "dice", "iou", "J_mean_Hz",
                                "J_std_Hz", "J_bias_Hz"}
