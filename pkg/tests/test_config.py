import pytest
from hypothesis import given, settings, strategies as st

from eigshape.config import SCHEMA, ConfigError, defaults, parse_config, serialize


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.values == defaults()
    assert cfg["mesh.resolution"] == 128 and cfg["mesh.box"] == (3.0, 3.0)
    assert set(cfg.values) == set(SCHEMA)


def test_comments_and_overrides():
    cfg = parse_config("# header\nmesh.resolution = 64  # coarse\n\ncoeff.generator = checkerboard\n")
    assert cfg["mesh.resolution"] == 64 and cfg["coeff.generator"] == "checkerboard"
    assert cfg.section("mesh")["resolution"] == 64


def test_unknown_generator_names_valid_set():
    with pytest.raises(ConfigError) as info:
        parse_config("coeff.generator = nosuch\n")
    msg = str(info.value)
    assert "nosuch" in msg and "identity, checkerboard, random" in msg and "line 1" in msg


def test_all_errors_reported_with_lines():
    text = "mesh.resolution = abc\nbogus.key = 1\ncoeff.generator = nosuch\npenalty.factor = 2\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    lines = [ln for ln, _ in info.value.errors]
    assert lines == [1, 2, 3, 4]


@pytest.mark.parametrize("text", ["mesh.dim = 4", "mesh.box = 1, -2", "coeff.theta = 5\ncoeff.Theta = 1",
                                  "output.run_id = ../x", "penalty.factor = 1.5", "diagnostics.levels = 2",
                                  "pipeline.inflate = maybe", "no equals sign"])
def test_invalid_inputs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_three_dimensional_box_default():
    assert parse_config("mesh.dim = 3")["mesh.box"] == (3.0, 3.0, 3.0)


def test_replace():
    cfg = parse_config("").replace(mesh__resolution=32)
    assert cfg["mesh.resolution"] == 32
    with pytest.raises(ConfigError):
        cfg.replace(mesh__resolution=1)
    with pytest.raises(ConfigError):
        cfg.replace(mesh__nothing=1)


_finite = st.floats(1e-6, 1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(res=st.integers(2, 512), gen=st.sampled_from(["identity", "checkerboard", "random"]),
       eps=_finite, smear=st.one_of(st.none(), _finite), factor=st.floats(1e-3, 1.0),
       theta=_finite, ratio=st.floats(1.0, 100.0), inflate=st.booleans(),
       run_id=st.from_regex(r"[A-Za-z0-9][A-Za-z0-9._-]{0,10}", fullmatch=True),
       box=st.tuples(_finite, _finite))
def test_round_trip(res, gen, eps, smear, factor, theta, ratio, inflate, run_id, box):
    cfg = parse_config("").replace(mesh__resolution=res, coeff__generator=gen, penalty__epsilon0=eps,
                                   penalty__smear0=smear, penalty__factor=factor, coeff__theta=theta,
                                   coeff__Theta=theta * ratio, pipeline__inflate=inflate,
                                   output__run_id=run_id, mesh__box=box)
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)
