import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from needlelab.config import (ConfigError, RunConfig, emit_config, load_config, make_initial,
                              parse_config)
from needlelab.spectral import SpectralGrid


def test_empty_text_gives_defaults():
    c = parse_config("")
    assert c == RunConfig()
    assert (c.n, c.length, c.tau, c.gamma, c.epsilon) == (256, 40.0, 1.0, 0.0, 0.0)
    assert (c.dt, c.t_final, c.s, c.scheme, c.background) == (1e-4, 0.1, 5, "imex", "flat")
    assert (c.window_inner_fraction, c.picard_tol, c.picard_max_iter) == (0.6, 1e-10, 50)


def test_comments_and_blank_lines():
    c = parse_config("# header\n\nscheme = picard   # trailing\ninit = single_mode 1 0.001\n")
    assert c.scheme == "picard" and c.init == "single_mode 1 0.001"


def test_single_mode_initial_field():
    c = parse_config("scheme = picard\ninit = single_mode 1 0.001")
    g = c.grid()
    u = c.initial_field(g)
    assert np.allclose(u.samples, 0.001 * np.sin(2 * np.pi * g.nodes / g.length))


@pytest.mark.parametrize("text,line", [
    ("gamma = 1.0", 1),
    ("\nbogus = 3", 2),
    ("n = 255", 1),
    ("n = abc", 1),
    ("dt 0.1", 1),
    ("scheme = rk4", 1),
    ("background = sphere", 1),
    ("tau = -1", 1),
    ("window_inner_fraction = 0.9", 1),
    ("init = single_mode 1", 1),
    ("init = sawtooth 1 2", 1),
    ("n = 128\nn = 64", 2),
])
def test_errors_name_the_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}"):
        parse_config(text)


def test_rejects_dt_beyond_t_final():
    with pytest.raises(ConfigError):
        parse_config("dt = 1\nt_final = 0.1")


def test_init_presets():
    g = SpectralGrid(128, 40.0)
    bump = make_initial(g, "gaussian_bump 0.1 2.0 1.0")
    assert bump.samples.max() == pytest.approx(0.1 * np.exp(-((g.nodes[np.argmax(bump.samples)] - 1) / 2) ** 2))
    a = make_initial(g, "random_bandlimited 5 0.01", seed=3)
    b = make_initial(g, "random_bandlimited 5 0.01", seed=3)
    c = make_initial(g, "random_bandlimited 5 0.01", seed=4)
    assert np.array_equal(a.samples, b.samples) and not np.array_equal(a.samples, c.samples)
    with pytest.raises(ConfigError):
        make_initial(g, "single_mode 64 0.1")


configs = st.builds(
    RunConfig,
    n=st.sampled_from([16, 64, 256, 1024]),
    length=st.floats(0.1, 1e3),
    tau=st.floats(1e-3, 10),
    gamma=st.floats(0.0, 0.99),
    epsilon=st.floats(0.0, 1.0),
    dt=st.floats(1e-6, 1e-3),
    t_final=st.floats(1e-3, 10.0),
    s=st.integers(0, 8),
    scheme=st.sampled_from(["imex", "picard"]),
    background=st.sampled_from(["flat", "ivantsov"]),
    seed=st.integers(0, 2**31),
    init=st.sampled_from(["single_mode 2 0.01", "gaussian_bump 0.1 1.5 -2", "random_bandlimited 7 0.3"]),
)


@settings(max_examples=60)
@given(configs)
def test_text_round_trip(c):
    assert parse_config(emit_config(c)) == c
    assert parse_config(emit_config(parse_config(emit_config(c)))) == c


@settings(max_examples=30)
@given(configs)
def test_json_round_trip(c):
    text = json.dumps({"config": c.to_dict(), "wall_time": 1.0})
    assert parse_config(text) == c


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="missing.cfg"):
        load_config(tmp_path / "missing.cfg")


def test_out_dir_fallback(monkeypatch):
    monkeypatch.delenv("NCL_OUT_DIR", raising=False)
    assert RunConfig().resolved_out_dir() == "needlelab_out"
    monkeypatch.setenv("NCL_OUT_DIR", "/tmp/x")
    assert RunConfig().resolved_out_dir() == "/tmp/x"
    assert RunConfig(out_dir="here").resolved_out_dir() == "here"
    assert RunConfig(out_dir="here").resolved_out_dir("flag") == "flag"


def test_cross_field_check_is_order_independent():
    assert parse_config("dt = 0.5\nt_final = 1").dt == 0.5
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("t_final = 0.1\ndt = 0.5")
