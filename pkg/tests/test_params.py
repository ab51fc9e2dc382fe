import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddchoice import ConfigError, ModelParams, read_config, write_config
from ddchoice.params import params_from_dict, params_to_dict, parse_kv_file


def test_default_truth_values():
    p = ModelParams()
    assert p.beta == 0.95
    assert p.sigma == ((1.7, 2.0), (1.6, 1.5))
    assert p.gamma == (0.0, -0.5)
    assert p.alpha == (2.0, 2.5)
    assert p.omega == (-2.0, -2.2)
    assert p.pi1 == 0.6
    assert (p.y_low, p.y_high) == (30.0, 60.0)
    assert p.income_transition == ((0.0, 0.3), (0.5, 0.75))
    assert p.r == 0.015
    assert (p.T, p.T_retire) == (10, 5)
    assert p.pension_rate == 0.5
    assert p.part_time_share == 0.5
    assert (p.init_asset_mean, p.init_asset_sd) == (40.0, 10.0)
    assert (p.init_w_prob, p.init_yhigh_prob) == (0.5, 0.5)


def test_income_by_choice():
    p = ModelParams()
    assert p.income(1, 60.0) == 60.0
    assert p.income(0, 60.0) == 30.0
    assert p.income(0, 30.0) == 15.0


@pytest.mark.parametrize(
    "kw",
    [
        dict(beta=1.0),
        dict(beta=0.0),
        dict(sigma=((1.0, 2.0), (1.6, 1.5))),
        dict(sigma=((-0.5, 2.0), (1.6, 1.5))),
        dict(pi1=0.0),
        dict(pi1=1.0),
        dict(income_transition=((0.0, 1.2), (0.5, 0.75))),
        dict(T=5),
        dict(y_low=-1.0),
        dict(part_time_share=0.0),
        dict(init_asset_sd=-1.0),
    ],
)
def test_validation_rejects(kw):
    with pytest.raises(ConfigError):
        ModelParams().replace(**kw)


def test_dict_round_trip():
    p = ModelParams().replace(beta=0.93, pi1=0.55)
    q = params_from_dict(params_to_dict(p))
    assert q == p


def test_dict_missing_and_unknown_keys():
    kv = params_to_dict(ModelParams())
    del kv["beta"]
    with pytest.raises(ConfigError, match="missing"):
        params_from_dict(kv)
    kv = params_to_dict(ModelParams())
    kv["extra"] = 1.0
    with pytest.raises(ConfigError, match="unknown"):
        params_from_dict(kv)


def test_config_file_round_trip(tmp_path):
    p = ModelParams().replace(beta=0.9375, alpha=(1.875, 2.125))
    path = tmp_path / "model.cfg"
    write_config(path, p)
    assert read_config(path) == p


def test_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("beta = 0.95\nnonsense line\n")
    with pytest.raises(ConfigError, match=r":2:"):
        parse_kv_file(path)
    path.write_text("beta = 0.95\nbeta = 0.9\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_kv_file(path)
    path.write_text("beta = abc\n")
    with pytest.raises(ConfigError, match="non-numeric"):
        read_config(path)


def test_comments_and_blank_lines_ignored(tmp_path):
    path = tmp_path / "model.cfg"
    write_config(path, ModelParams())
    text = "# leading comment\n\n" + path.read_text() + "\n# trailing\n"
    path.write_text(text)
    assert read_config(path) == ModelParams()


@given(
    beta=st.floats(0.8, 0.999),
    sig=st.floats(1.05, 4.0),
    pi1=st.floats(0.05, 0.95),
    gam=st.floats(-3.0, 3.0),
)
def test_round_trip_property(beta, sig, pi1, gam):
    p = ModelParams().replace(
        beta=beta, sigma=((sig, sig + 0.1), (sig, sig)), pi1=pi1, gamma=(gam, gam / 2)
    )
    q = params_from_dict(params_to_dict(p))
    assert q == p
    assert math.isclose(q.beta, beta, rel_tol=0, abs_tol=0)
