import pandas as pd
import pytest

from scripts.run_matrix import ConfigError, build_config, build_parser, main
from services.controllers import ControllerKind
from services.experiment import ExperimentConfig, pairwise_ttests, run_matrix, summary_by_cell
from services.ranking import ControllerRanking
from services.scenario import ScenarioSpec, run_scenario
from services.traffic import TrafficStateKind
from utils.config import EnvSettings, SimulationParameters

QUICK = {"warmup_time": 8.0, "approach_length": 300.0, "insertion_wait": 4.0, "sample_per_lane": 3}


@pytest.fixture
def layout(tmp_path):
    path = tmp_path / "layout.txt"
    path.write_text("300 onramp\n300\n300 offramp\n")
    return path


@pytest.fixture
def quick_params():
    return SimulationParameters(**QUICK)


def test_full_matrix_size():
    config = ExperimentConfig()
    assert config.run_count() == 1050
    assert len(config.scenario_specs()) == 1050


def test_controllers_share_seeds():
    config = ExperimentConfig(controllers=["CF", "OC"], states=["free"], vot=[0], seeds=3, base_seed=10)
    seeds = {}
    for spec in config.scenario_specs():
        seeds.setdefault(spec.controller, []).append(spec.seed)
    assert seeds[ControllerKind.CF] == seeds[ControllerKind.OC] == [10, 11, 12]


def test_run_dir_layout():
    config = ExperimentConfig(out_dir="out")
    spec = ScenarioSpec(ControllerKind.OC_LM6, TrafficStateKind.ONSET, 20.0, 2019)
    assert config.run_dir(spec).as_posix() == "out/OC_LM6/onset/vot20/seed_2019"


def test_cli_single_run_config():
    args = build_parser().parse_args(["--controllers", "CF", "--states", "onset", "--vot", "0", "--seeds", "1"])
    config = build_config(args, EnvSettings())
    assert config.run_count() == 1
    assert config.controllers == [ControllerKind.CF]
    assert config.states == [TrafficStateKind.ONSET]


def test_cli_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seeds = 4\nhorizon = 8\ncontrollers = OC, OC_L\n")
    args = build_parser().parse_args(["--config", str(cfg), "--seeds", "2", "--grid-speed-step", "1.5"])
    config = build_config(args, EnvSettings(base_seed=7, output_dir="env_out"))
    assert config.seeds == 2
    assert config.base_seed == 7
    assert config.out_dir == "env_out"
    assert config.parameters.horizon == 8.0
    assert config.parameters.speed_step == 1.5
    assert config.controllers == [ControllerKind.OC, ControllerKind.OC_L]


@pytest.mark.parametrize("argv", [
    ["--controllers", "OC_X"],
    ["--states", "jammed"],
    ["--seeds", "0"],
    ["--param", "p_on=2"],
    ["--param", "no_such=1"],
    ["--param", "missing-equals"],
])
def test_cli_rejects_bad_values(argv):
    with pytest.raises(ConfigError):
        build_config(build_parser().parse_args(argv), EnvSettings())


def test_cli_bad_config_exit_code(tmp_path):
    assert main(["--controllers", "OC_X", "--out", str(tmp_path)]) == 1
    assert main(["--network", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 1


def synthetic_results():
    rows = []
    for controller, values in (("CF", [1, 2, 3, 4, 5]), ("OC", [3, 4, 5, 6, 7]), ("OC_L", [0.5])):
        for seed, value in enumerate(values):
            rows.append({"controller": controller, "state": "free", "vot": 0.0, "seed": seed,
                         "subject_per_10km": float(value), "upstream_per_10km": 1.0})
    return pd.DataFrame(rows)


def test_pairwise_ttests():
    tests = pairwise_ttests(synthetic_results())
    subject = tests[tests["metric"] == "subject_per_10km"]
    assert list(zip(subject["controller_a"], subject["controller_b"])) == [("CF", "OC")]
    row = subject.iloc[0]
    assert row["t"] == pytest.approx(-2.0)
    assert row["p"] == pytest.approx(0.0805, abs=1e-3)
    assert not row["significant"]
    upstream = tests[tests["metric"] == "upstream_per_10km"].iloc[0]
    assert upstream["p"] == 1.0


def test_ranking():
    ranking = ControllerRanking()
    scores = ranking.rank(synthetic_results())
    subject = [s for s in scores if s.metric == "subject_per_10km"]
    assert [s.controller for s in subject] == ["OC_L", "CF", "OC"]
    assert [s.rank for s in subject] == [1, 2, 3]
    assert subject[2].gain_vs_baseline == pytest.approx(-2.0 / 3.0)
    assert ranking.get_best(scores, "free", 0.0) == "OC_L"
    with pytest.raises(KeyError):
        ranking.get_best(scores, "congested", 0.0)
    frame = ranking.to_frame(scores)
    assert list(frame.columns)[:4] == ["state", "vot", "metric", "controller"]


def test_summary_by_cell():
    summary = summary_by_cell(synthetic_results())
    table = summary["subject_per_10km"]
    assert table.loc[table["controller"] == "OC", "mean"].item() == 5.0


def test_car_following_scenario(quick_params, layout):
    network = quick_params.network(layout)
    result = run_scenario(ScenarioSpec(ControllerKind.CF, TrafficStateKind.FREE_FLOW, 20.0, 3), quick_params, network)
    row = result.to_row()
    assert result.replans == 0
    assert result.subject.distance > 0
    assert row["subject_per_10km"] > row["subject_fuel_per_10km"] > 0
    assert row["subject_time_per_10km"] == pytest.approx(20.0 / 3600.0 * result.trip_time * 10000.0
                                                          / result.subject.distance, rel=1e-6)


def test_optimal_scenario_writes_run_files(tmp_path, layout):
    params = SimulationParameters(**QUICK, horizon=4.0, speed_step=4.0, duration_step=2.0)
    spec = ScenarioSpec(ControllerKind.OC, TrafficStateKind.FREE_FLOW, 0.0, 3)
    out = tmp_path / "run"
    result = run_scenario(spec, params, params.network(layout), out_dir=out)
    assert result.replans > 0
    assert result.lane_changes == 0
    assert result.merges == 0
    for name in ("trajectory.csv", "events.log", "costs.csv", "fuel_rate.csv", "velocity.csv"):
        assert (out / name).exists()
    events = (out / "events.log").read_text().splitlines()
    assert any("\tplan\t" in line for line in events)
    trajectory = pd.read_csv(out / "trajectory.csv")
    assert set(trajectory["group"]) >= {"subject"}


def test_matrix_is_reproducible(tmp_path, quick_params, layout):
    def run(out):
        config = ExperimentConfig(
            controllers=["CF"], states=["free", "congested"], vot=[0], seeds=2, out_dir=str(out),
            parameters=quick_params, network_file=str(layout),
        )
        return run_matrix(config, progress=False)

    first = run(tmp_path / "a")
    run(tmp_path / "b")
    assert len(first.results) == 4
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    for name in ("ttests.csv", "timing.csv", "ranking.csv"):
        assert (tmp_path / "a" / name).exists()
    assert (tmp_path / "a" / "CF" / "free" / "vot0" / "seed_2019" / "events.log").exists()
    assert first.ranking["gain_vs_baseline"].iloc[0] == pytest.approx(0.0)


def test_cli_end_to_end(tmp_path, layout):
    code = main([
        "--controllers", "CF", "--states", "free", "--vot", "0", "--seeds", "2",
        "--network", str(layout), "--out", str(tmp_path), "--no-progress", "--no-run-files",
        "--param", "warmup_time=8", "--param", "approach_length=300", "--param", "insertion_wait=4",
    ])
    assert code == 0
    results = pd.read_csv(tmp_path / "results.csv")
    assert list(results["seed"]) == [2019, 2020]
    assert not (tmp_path / "CF").exists()
