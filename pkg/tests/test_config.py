import pytest
from pydantic import ValidationError

from core.road import Lane
from utils.config import (
    ConfigValidator,
    SimulationParameters,
    load_config_file,
    load_env_settings,
    parse_key_values,
)


def test_defaults_match_evaluation_setup():
    params = SimulationParameters()
    assert params.t_upd == 0.4
    assert params.horizon == 10.0
    assert params.schedule_levels == (2, 10, 50)
    assert params.sample_per_lane == 15


def test_parameters_are_frozen():
    with pytest.raises(ValidationError):
        SimulationParameters().t_p = 2.0


def test_unknown_field_is_rejected():
    with pytest.raises(ValidationError):
        SimulationParameters(t_q=1.0)


def test_overrides_accept_strings():
    params = SimulationParameters().with_overrides({"p_merge": "0.8", "sample_per_lane": "10"})
    assert params.p_merge == 0.8
    assert params.sample_per_lane == 10


def test_schedule_levels_from_text():
    params = SimulationParameters().with_overrides({"schedule_levels": "3, 12,40"})
    assert params.schedule_levels == (3, 12, 40)
    with pytest.raises(ValidationError, match="strictly ascending"):
        SimulationParameters(schedule_levels="50,10,2")


@pytest.mark.parametrize("field, value", [("p_on", 1.2), ("t_upd", 0.0), ("beta_platoon", 1.5)])
def test_out_of_range_values(field, value):
    with pytest.raises(ValidationError):
        SimulationParameters(**{field: value})


def test_views_carry_values():
    params = SimulationParameters(t_g=0.6, horizon=8.0, p_change=0.2, speed_step=1.0)
    assert params.limits().horizon == 8.0
    assert params.limits().t_g == 0.6
    assert params.behavior().p_change == 0.2
    assert params.behavior().idm.T == 3.5
    assert params.planner_settings().speed_step == 1.0
    assert SimulationParameters(merge_closing_rate=2.0).planner_settings().merge_closing_rate == 2.0
    assert params.cost_params(36.0).eta_t == pytest.approx(0.01)


def test_network_views(tmp_path):
    params = SimulationParameters(v_max_left=25.0)
    assert params.network().total_length == pytest.approx(10800.0)
    assert params.network().v_max(Lane.LEFT) == 25.0
    layout = tmp_path / "layout.txt"
    layout.write_text("500 onramp\n500 offramp\n")
    assert params.network(layout).total_length == 1000.0
    assert params.network_from_lines(["200", "300 offramp"]).offramp_points() == [(2, 350.0)]


def test_parse_key_values():
    values = parse_key_values(["# run", "P-Merge = 0.7", "", "seeds=5  # fewer"])
    assert values == {"p_merge": "0.7", "seeds": "5"}


@pytest.mark.parametrize("line, message", [("just words", "expected KEY = VALUE"), ("= 3", "missing key")])
def test_parse_key_values_errors(line, message):
    with pytest.raises(ValueError, match=message):
        parse_key_values([line], "run.cfg")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("horizon = 8\n")
    assert load_config_file(path) == {"horizon": "8"}
    with pytest.raises(ValueError, match="does not exist"):
        load_config_file(tmp_path / "missing.cfg")


def test_env_settings(monkeypatch, tmp_path):
    monkeypatch.setenv("SIM_WORKERS", "4")
    monkeypatch.setenv("SIM_OUTPUT_DIR", str(tmp_path / "out"))
    monkeypatch.delenv("SIM_BASE_SEED", raising=False)
    settings = load_env_settings()
    assert settings.workers == 4
    assert settings.output_dir == str(tmp_path / "out")
    assert settings.base_seed == 2019


def test_invalid_env_settings(monkeypatch):
    monkeypatch.setenv("SIM_WORKERS", "0")
    with pytest.raises(ValidationError):
        load_env_settings()


def test_validator_overrides():
    assert ConfigValidator.validate_parameter_overrides({"horizon": 8.0}) == (True, None)
    ok, error = ConfigValidator.validate_parameter_overrides({"horizn": 8.0})
    assert not ok
    assert "Unknown parameter" in error
    ok, error = ConfigValidator.validate_parameter_overrides({"p_on": 2.0})
    assert not ok
    assert error.startswith("Invalid value for p_on")


def test_validator_lists():
    assert ConfigValidator.validate_states(["free", "congested"]) == (True, None)
    assert not ConfigValidator.validate_states(["jammed"])[0]
    assert not ConfigValidator.validate_controllers(["OC_X"])[0]
    assert not ConfigValidator.validate_seeds(0)[0]
    assert not ConfigValidator.validate_vot([])[0]
    assert not ConfigValidator.validate_vot([-1.0])[0]
    assert ConfigValidator.validate_vot([0.0, 20.0]) == (True, None)
