import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parablow.config import RunConfig, load_config, parse_config
from parablow.errors import ConfigError
from parablow.geometry import DomainSpec
from parablow.problem import ProblemSpec

MINIMAL = '{\n  "q": 2,\n  "domain": "interval(-1,1)",\n  "path": "maximal"\n}\n'


def test_defaults_filled():
    cfg = parse_config(MINIMAL)
    assert cfg.h == 1 / 256
    assert cfg.stepper.tau0 == 1e-5 and cfg.stepper.schedule == "geometric"
    assert cfg.paths == ("maximal",)
    assert cfg.problem.domain == DomainSpec.interval(-1, 1)


def test_q_must_exceed_one():
    with pytest.raises(ConfigError, match=r"line 1, field 'q': exponent must exceed 1, got 1"):
        parse_config('{"q": 1, "domain": "interval(-1,1)"}')


def test_duplicate_key_reports_line():
    text = '{\n  "q": 2,\n  "q": 3,\n  "domain": "interval(-1,1)"\n}'
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == 3 and "duplicate" in str(err.value)


def test_unknown_key_rejected_with_context():
    text = '{\n  "q": 2,\n  "domain": "interval(-1,1)",\n  "colour": "red"\n}'
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.field == "colour" and err.value.line == 4


def test_type_mismatch():
    with pytest.raises(ConfigError, match="expected a number"):
        parse_config('{"q": "two", "domain": "interval(-1,1)"}')
    with pytest.raises(ConfigError, match="stepper.rho"):
        parse_config('{"q": 2, "domain": "interval(-1,1)", "stepper": {"rho": [1]}}')


def test_malformed_json_reports_line():
    with pytest.raises(ConfigError) as err:
        parse_config('{\n  "q": 2,\n  "domain": \n}')
    assert err.value.line == 4


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg")


def test_full_config_round_trip(tmp_path):
    raw = {
        "q": 3,
        "domain": {"kind": "exterior-of-ball", "params": [1, 16], "dim": 1},
        "h": 0.125,
        "path": ["maximal", "minimal"],
        "lateral": 0,
        "initial": {"mode": "blowup", "max_doublings": 30},
        "output_times": [0.1, 0.5],
        "T": 0.5,
        "stepper": {"tau0": 1e-4, "rho": 1.05},
        "probe": {"min_dist": 0.25, "radius": 2},
        "truncation": [4, 8, 16],
        "sweep": {"q": [2, 3], "lambda": [2]},
        "seed": 7,
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(raw, indent=2))
    cfg = load_config(path)
    assert cfg.problem.q == 3.0 and cfg.problem.domain.kind == "exterior"
    assert cfg.truncation.values == (4.0, 8.0, 16.0)
    assert cfg.sweep == {"q": (2.0, 3.0), "lambda": (2.0,)}
    assert cfg.problem.initial.max_doublings == 30 and cfg.seed == 7


def test_invariants():
    with pytest.raises(ConfigError):
        parse_config('{"q": 2, "domain": "interval(-1,1)", "path": []}')
    with pytest.raises(ConfigError):
        parse_config('{"q": 2, "domain": "interval(-1,1)", "sweep": {"h": []}}')
    with pytest.raises(ConfigError):
        parse_config('{"q": 2, "domain": "interval(-1,1)", "output_times": [0.5, 0.1]}')
    with pytest.raises(ConfigError):
        RunConfig(ProblemSpec(2.0, DomainSpec.interval(-1, 1)), paths=("sideways",))


@settings(max_examples=50, deadline=None)
@given(q=st.floats(1.001, 10), h=st.floats(1e-4, 0.5))
def test_valid_numbers_parse(q, h):
    cfg = parse_config(json.dumps({"q": q, "domain": "interval(-1,1)", "h": h}))
    assert cfg.problem.q == q and cfg.h == h


@settings(max_examples=50, deadline=None)
@given(key=st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
def test_unknown_keys_always_rejected(key):
    from parablow.config import TOP_KEYS

    if key in TOP_KEYS:
        return
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"q": 2, "domain": "interval(-1,1)", key: 1}))
