import pytest
from helpers.errors import NumericError
from helpers.helper import read_csv
from models.config import RunConfig
import modules.verify.checks as checks_module
from modules.verify.checks import CHECKS, Check, check_flow_regret, cmd_verify, run_check, select_checks


def verify_config(tmp_path, **settings) -> RunConfig:
    return RunConfig.model_validate({"subcommand": "verify", "output_dir": str(tmp_path), "verify": settings})


def test_check_names_are_unique():
    """Every check has its own name"""
    names = [check.name for check in CHECKS]
    assert len(names) == len(set(names))


def test_select_checks_skips_slow_by_default():
    """Slow checks need --full"""
    quick = select_checks(None, full=False)
    assert quick and not any(check.slow for check in quick)
    assert len(select_checks(None, full=True)) == len(CHECKS)


def test_select_checks_filters_by_substring():
    """--filter matches anywhere in the name"""
    names = [check.name for check in select_checks("vi.", full=False)]
    assert names == ["vi.logistic", "vi.gaussian"]
    assert select_checks("no-such-check", full=True) == []
    assert [c.name for c in select_checks("flow.distill", full=True)] == ["flow.distill"]


def test_run_check_turns_lab_errors_into_failures():
    """A LabError fails the check instead of the suite"""

    def broken(seed):
        raise NumericError("bracket lost")

    result = run_check(Check("broken", broken), 0)
    assert not result.passed
    assert result.detail == "NumericError: bracket lost"
    assert result.seconds >= 0


def test_run_check_lets_bugs_through():
    """Errors outside the lab hierarchy propagate"""

    def buggy(seed):
        raise KeyError("missing")

    with pytest.raises(KeyError):
        run_check(Check("buggy", buggy), 0)


def test_cmd_verify_reports_failures(tmp_path, monkeypatch):
    """Any failing check makes the exit code 1 and every result lands in verify.csv"""
    fake = [
        Check("fake.pass", lambda seed: (True, "fine, really")),
        Check("fake.fail", lambda seed: (False, f"seed {seed}")),
    ]
    monkeypatch.setattr("modules.verify.checks.CHECKS", fake)
    assert cmd_verify(verify_config(tmp_path).model_copy(update={"seed": 5})) == 1
    header, rows = read_csv(tmp_path / "verify.csv")
    assert header == ["check", "passed", "seconds", "detail"]
    assert [(row[0], row[1]) for row in rows] == [("fake.pass", "true"), ("fake.fail", "false")]
    assert rows[0][3] == "fine; really"
    assert rows[1][3] == "seed 5"


def test_cmd_verify_all_pass(tmp_path, monkeypatch):
    """Exit code 0 when every selected check passes"""
    monkeypatch.setattr("modules.verify.checks.CHECKS", [Check("fake.ok", lambda seed: (True, ""))])
    assert cmd_verify(verify_config(tmp_path)) == 0


def test_cmd_verify_without_matches(tmp_path):
    """An empty selection is a warning, not a failure"""
    assert cmd_verify(verify_config(tmp_path, filter="no-such-check")) == 0
    assert not (tmp_path / "verify.csv").exists()


@pytest.mark.parametrize(
    "name",
    [
        "gaussian.riccati",
        "three_point.closed_form",
        "divergence.relative_convexity",
        "flow.identity",
        "neural.gradients",
        "vi.logistic",
        "vi.gaussian",
    ],
)
def test_quick_checks_pass(name):
    """The quick invariants hold for seed 0"""
    (check,) = [c for c in CHECKS if c.name == name]
    result = run_check(check, 0)
    assert result.passed, result.detail


@pytest.mark.slow
@pytest.mark.parametrize("name", [c.name for c in CHECKS if c.slow])
def test_slow_checks_pass(name):
    """The slow invariants hold for seed 0"""
    (check,) = [c for c in CHECKS if c.name == name]
    result = run_check(check, 0)
    assert result.passed, result.detail


def test_regret_check_runs_exact_and_distilled_flows(monkeypatch):
    """T=16 runs on exact oracle residuals next to the distilled 16/64/256 runs"""
    configs = []

    def scaled(cfg, scale):
        configs.append(cfg)
        return 1.0, ""

    monkeypatch.setattr(checks_module, "_scaled_regret", scaled)
    passed, detail = check_flow_regret(5)
    assert passed
    exact = [cfg for cfg in configs if not cfg.distill]
    distilled = [cfg for cfg in configs if cfg.distill]
    assert [cfg.T for cfg in exact] == [16, 16]
    assert all(cfg.max_order > 2 * cfg.T + 3 for cfg in exact)
    assert [cfg.T for cfg in distilled] == [16, 64, 256, 16, 64, 256]
    assert "oracle16" in detail and "distilled" in detail


def test_regret_check_fails_on_growing_exact_regret(monkeypatch):
    """An exact T=16 value far below the distilled T=64 value fails the check"""
    monkeypatch.setattr(
        checks_module, "_scaled_regret", lambda cfg, scale: (0.5 if not cfg.distill else 1.0, "")
    )
    passed, _ = check_flow_regret(5)
    assert not passed
