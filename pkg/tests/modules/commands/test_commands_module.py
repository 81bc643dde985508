import json
import pytest
from helpers.errors import TrainingError
from helpers.helper import read_csv
from models.config import RunConfig
from modules.commands.flow import histogram_rows
from modules.commands.gaussian import cmd_gaussian, continuous_rows
from modules.commands.sinkhorn import cmd_sinkhorn_limit
from modules.commands.three_point import cmd_three_point
from modules.commands.vi import cmd_vi
from modules.processor import run_handler
import main as entry
import modules.commands.three_point as three_point_module


def run_config(tmp_path, subcommand, **sections) -> RunConfig:
    return RunConfig.model_validate({"subcommand": subcommand, "output_dir": str(tmp_path), **sections})


def test_gaussian_command(tmp_path, config_dir):
    """Certified run writes both tables and the certificate"""
    config = RunConfig.from_file(config_dir / "gaussian.yaml", {"output_dir": str(tmp_path)})
    assert cmd_gaussian(config) == 0
    header, rows = read_csv(tmp_path / "gaussian_discrete.csv")
    assert header == ["k", "c", "bound"]
    assert len(rows) == 51
    assert all(abs(float(c) - 2.0) <= float(bound) + 1e-12 for _, c, bound in rows)
    certificate = json.loads((tmp_path / "gaussian_certificate.json").read_text())
    assert certificate["certified"] is True
    assert (tmp_path / "gaussian_continuous.csv").exists()


def test_gaussian_rejected_certificate(tmp_path):
    """A rejected certificate still exits 0 and leaves the bound column empty"""
    config = run_config(tmp_path, "gaussian", gaussian={"eta": 0.6, "steps": 5})
    assert cmd_gaussian(config) == 0
    _, rows = read_csv(tmp_path / "gaussian_discrete.csv")
    assert len(rows) == 6
    assert all(row[2] == "" for row in rows)
    certificate = json.loads((tmp_path / "gaussian_certificate.json").read_text())
    assert certificate["certified"] is False
    assert certificate["hypothesis"] == "eta"


def test_continuous_rows_at_fixed_point(tmp_path):
    """lambda = 1 keeps both flows at sigma = 1 and the ratio at 1"""
    config = run_config(tmp_path, "gaussian", gaussian={"lambda": 1.0, "t_max": 1.0})
    rows = continuous_rows(config.settings)
    assert len(rows) == 11
    for _, sigma_riccati, sigma_fp, ratio in rows:
        assert sigma_riccati == pytest.approx(1.0)
        assert sigma_fp == pytest.approx(1.0)
        assert ratio == 1.0


def test_three_point_command(tmp_path):
    """Closed-form and quadrature tables have one row per trial"""
    config = run_config(tmp_path, "three-point", three_point={"trials": 20, "quad_trials": 2}, jobs=2)
    assert cmd_three_point(config) == 0
    header, rows = read_csv(tmp_path / "three_point.csv")
    assert header == ["trial", "lhs", "bg1", "bg2", "bgpi", "residual"]
    assert len(rows) == 20
    _, quad_rows = read_csv(tmp_path / "three_point_quadrature.csv")
    assert len(quad_rows) == 2
    _, convexity = read_csv(tmp_path / "relative_convexity.csv")
    assert all(float(row[-1]) >= -1e-12 for row in convexity)


def test_three_point_is_seeded(tmp_path):
    """Same seed, same triples"""
    first = run_config(tmp_path / "a", "three-point", three_point={"trials": 5, "quad_trials": 0}, seed=11)
    second = run_config(tmp_path / "b", "three-point", three_point={"trials": 5, "quad_trials": 0}, seed=11)
    cmd_three_point(first)
    cmd_three_point(second)
    assert (tmp_path / "a" / "three_point.csv").read_text() == (tmp_path / "b" / "three_point.csv").read_text()
    assert not (tmp_path / "a" / "three_point_quadrature.csv").exists()


def test_sinkhorn_command(tmp_path):
    """Residual shrinks with epsilon"""
    config = run_config(tmp_path, "sinkhorn-limit", sinkhorn={"epsilons": [0.2, 0.1], "probe_count": 3})
    assert cmd_sinkhorn_limit(config) == 0
    header, rows = read_csv(tmp_path / "sinkhorn_limit.csv")
    assert header == ["epsilon", "max_residual"]
    assert float(rows[1][1]) < float(rows[0][1])
    assert (tmp_path / "sinkhorn_identity.csv").exists()


def test_flow_command(tmp_path, config_dir):
    """Oracle run writes the trace and a summary with the averaged-iterate bound"""
    config = RunConfig.from_file(config_dir / "flow_oracle.yaml", {"output_dir": str(tmp_path)})
    assert run_handler(config) == 0
    header, rows = read_csv(tmp_path / "trace.csv")
    assert header[:3] == ["k", "eta", "kl"]
    assert len(rows) == 4
    summary = json.loads((tmp_path / "flow_summary.json").read_text())
    assert summary["failure"] is None
    assert summary["records"] == 4
    assert summary["average_iterate"]["slack"] >= -1e-5
    _, histogram = read_csv(tmp_path / "histogram.csv")
    assert len(histogram) == 20
    _, final_map = read_csv(tmp_path / "final_map.csv")
    assert len(final_map) == 31


def test_flow_command_reports_failure(tmp_path, config_dir):
    """A flow that loses convexity exits 1"""
    config = RunConfig.from_file(
        config_dir / "flow_oracle.yaml",
        {
            "output_dir": str(tmp_path),
            "flow": {"target": {"kind": "gaussian", "std": 0.5}, "schedule": {"kind": "constant", "eta": 1.0}},
        },
    )
    assert run_handler(config) == 1
    summary = json.loads((tmp_path / "flow_summary.json").read_text())
    assert summary["failure"].startswith("ConvexityError")


def test_histogram_rows():
    """Both densities integrate to one over the pooled range"""
    rows = histogram_rows([0.0, 0.5, 1.0, 1.5], [0.2, 0.4, 1.8, 2.0], 4)
    assert len(rows) == 4
    assert sum((b - a) * m for a, b, m, _ in rows) == pytest.approx(1.0)
    assert sum((b - a) * t for a, b, _, t in rows) == pytest.approx(1.0)


def test_vi_command(tmp_path, config_dir):
    """Trace and sweep tables"""
    config = RunConfig.from_file(
        config_dir / "vi_gaussian.yaml", {"output_dir": str(tmp_path), "vi": {"starts": [[0.0, 1.0], [4.0, 2.0]]}}
    )
    assert cmd_vi(config) == 0
    header, rows = read_csv(tmp_path / "vi_trace.csv")
    assert header == ["k", "m", "s", "eta", "err1", "err2"]
    assert len(rows) == 201
    assert float(rows[-1][1]) == pytest.approx(1.5, abs=1e-6)
    _, sweep = read_csv(tmp_path / "vi_sweep.csv")
    assert len(sweep) == 2 * 201
    assert {row[0] for row in sweep} == {"0", "1"}


def test_main_runs_and_echoes_config(tmp_path):
    """--T reaches the gaussian steps and the config is echoed"""
    assert entry.main(["gaussian", "--out", str(tmp_path), "--T", "5", "--seed", "4"]) == 0
    echoed = json.loads((tmp_path / "config.json").read_text())
    assert echoed["seed"] == 4
    assert echoed["gaussian"]["steps"] == 5
    assert (tmp_path / "config.yaml").exists()
    _, rows = read_csv(tmp_path / "gaussian_discrete.csv")
    assert len(rows) == 6


def test_main_rejects_bad_seed():
    """Seeds outside u64 are usage errors"""
    with pytest.raises(SystemExit) as exc:
        entry.main(["gaussian", "--seed", str(1 << 64)])
    assert exc.value.code == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["gaussian", "--config", "does-not-exist.yaml"],
        ["gaussian", "--lambda", "2.0"],
        ["flow", "--eta", "0.1"],
        ["flow", "--schedule", "constant", "--adaptive-mode", "min"],
    ],
)
def test_main_configuration_errors(tmp_path, argv):
    """Invalid configurations exit 2 before anything runs"""
    assert entry.main(argv + ["--out", str(tmp_path)]) == 2
    assert not (tmp_path / "config.json").exists()


def test_main_maps_lab_errors(tmp_path, monkeypatch):
    """A LabError escaping the handler becomes its exit code"""

    def broken(config):
        raise TrainingError("diverged", epoch=3)

    monkeypatch.setattr(entry, "run_handler", broken)
    assert entry.main(["vi", "--out", str(tmp_path)]) == 1


def test_main_flow_schedule_overrides(tmp_path, monkeypatch):
    """--schedule and --eta build a constant schedule; inverse-sqrt-t picks up --T"""
    seen = []
    monkeypatch.setattr(entry, "run_handler", lambda config: seen.append(config) or 0)
    assert entry.main(["flow", "--out", str(tmp_path), "--schedule", "constant", "--eta", "0.05"]) == 0
    assert seen[-1].flow.schedule.kind == "constant"
    assert seen[-1].flow.schedule.eta == 0.05
    assert entry.main(["flow", "--out", str(tmp_path), "--schedule", "inverse-sqrt-t", "--T", "16"]) == 0
    assert seen[-1].flow.schedule.T == 16
    assert seen[-1].flow.schedule.eta_at(0) == pytest.approx(0.25)


def test_main_vi_monte_carlo_flag(tmp_path, monkeypatch):
    """--mc switches the expectations to seeded Monte Carlo"""
    seen = []
    monkeypatch.setattr(entry, "run_handler", lambda config: seen.append(config) or 0)
    assert entry.main(["vi", "--out", str(tmp_path), "--mc", "500", "--starts", "0,1;2,0.5"]) == 0
    assert str(seen[-1].vi.expectation.mode) == "mc"
    assert seen[-1].vi.expectation.sample_count == 500
    assert seen[-1].vi.starts == [(0.0, 1.0), (2.0, 0.5)]


def test_three_point_quad_nodes(tmp_path, monkeypatch):
    """--quad-nodes sets the node count of the quadrature triples"""
    nodes = []
    quadrature = three_point_module.three_point_quadrature

    def recording(pi, rho1, rho2, g, quad):
        nodes.append(quad.nodes)
        return quadrature(pi, rho1, rho2, g, quad)

    monkeypatch.setattr(three_point_module, "three_point_quadrature", recording)
    argv = ["three-point", "--out", str(tmp_path), "--T", "3", "--quad-trials", "2", "--quad-nodes", "40"]
    assert entry.main(argv) == 0
    assert nodes == [40, 40]
    assert json.loads((tmp_path / "config.json").read_text())["quad_nodes"] == 40


@pytest.mark.parametrize(
    "argv, tables",
    [
        (["gaussian", "--T", "8", "--seed", "5"], ["gaussian_discrete.csv", "gaussian_continuous.csv"]),
        (
            ["three-point", "--T", "10", "--quad-trials", "2", "--seed", "9"],
            ["three_point.csv", "relative_convexity.csv", "three_point_quadrature.csv"],
        ),
    ],
)
def test_rerun_from_echoed_config(tmp_path, argv, tables):
    """Rerunning with the echoed config.json reproduces every table byte for byte"""
    first, second = tmp_path / "first", tmp_path / "second"
    assert entry.main(argv + ["--out", str(first)]) == 0
    assert entry.main([argv[0], "--config", str(first / "config.json"), "--out", str(second)]) == 0
    for table in tables:
        assert (first / table).read_bytes() == (second / table).read_bytes()
    echoed = [json.loads((out / "config.json").read_text()) for out in (first, second)]
    for data in echoed:
        data.pop("output_dir")
    assert echoed[0] == echoed[1]
