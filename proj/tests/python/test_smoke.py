import json
import math
import os
from pathlib import Path

import pytest

import marlbc

CONFIG_DIR = Path(os.environ.get("MARLBC_CONFIG_DIR", Path(__file__).resolve().parents[2] / "configs"))


def test_presets_round_trip():
    ids = marlbc.preset_ids()
    assert "rbc_textbook" in ids and "ks" in ids
    text = marlbc.preset_config("rbc_partial")
    assert marlbc.parse_config(text) == text
    assert len(marlbc.config_hash(text)) == 40
    assert marlbc.config_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_shipped_configs_validate():
    for path in sorted(CONFIG_DIR.glob("*.cfg")):
        assert marlbc.canonical_config(str(path))


def test_config_errors_raise_value_error():
    with pytest.raises(marlbc.ConfigError):
        marlbc.parse_config("[economy]\nbogus = 1\n")
    with pytest.raises(ValueError):
        marlbc.preset_config("nope")


def test_textbook_oracles():
    c_hat, l = marlbc.analytic_textbook_policy()
    assert c_hat == pytest.approx(0.658, abs=1e-12)
    assert l == pytest.approx(0.36 / 2.32, abs=1e-12)
    c_hat, l = marlbc.full_depreciation_optimum()
    assert l == pytest.approx(0.64 / (0.64 + 5 * 0.658), abs=1e-12)
    ss = marlbc.steady_state("rbc_partial")
    assert ss["k_star"] == pytest.approx(1.39007, rel=1e-5)
    assert ss["fixed_point_error"] < 1e-8


def test_economy_episode():
    env = marlbc.Economy("rbc_textbook")
    obs = env.reset(3)
    assert len(obs) == 1 and len(obs[0]) == env.observation_dim
    rewards = []
    while not env.done:
        out = env.step([(0.658, 0.16)])
        rewards.append(out["rewards"][0])
    assert env.t == 500
    assert all(math.isfinite(r) for r in rewards)
    with pytest.raises(marlbc.ProtocolError):
        env.step([(0.5, 0.5)])
    again = marlbc.Economy("rbc_textbook")
    again.reset(3)
    assert again.step([(0.658, 0.16)])["rewards"][0] == pytest.approx(rewards[0], abs=0)


def test_ks_economy_has_twenty_households():
    env = marlbc.Economy("ks")
    env.reset(0)
    out = env.step([(0.5, 0.5)] * env.n)
    assert env.n == 20
    assert len(out["wealth"]) == 20
    assert 0.0 <= marlbc.gini(out["wealth"]) < 1.0


def test_metrics():
    assert marlbc.gini([0, 0, 0, 1]) == pytest.approx(0.75)
    population, wealth, g = marlbc.lorenz([1, 2, 3, 4])
    assert g == pytest.approx(0.25)
    assert population[0] == 0 and wealth[-1] == pytest.approx(1.0)
    fit = marlbc.ols_fit([0, 1, 2], [1, 3, 5])
    assert fit["slope"] == pytest.approx(2.0)
    assert fit["r_squared"] == pytest.approx(1.0)


def test_cli_bridge():
    code, out, err = marlbc.cli(["oracle", "rbc_textbook"])
    assert code == 0
    assert json.loads(out)["c_hat_star"] == pytest.approx(0.658)
    code, out, err = marlbc.cli(["frobnicate"])
    assert code != 0
    assert "unknown subcommand" in err


def test_short_run(tmp_path):
    result = marlbc.run("rbc_textbook", seeds=[0], steps=400, out=str(tmp_path / "run"))
    assert Path(result["run_dir"]).is_dir()
    metrics = result["metrics"]
    assert metrics["steps"] == 400
    assert "gini_wealth" in metrics
    assert metrics["best_eval_reward"] < 0.0
    code, out, err = marlbc.cli(["metrics", result["run_dir"], "--check"])
    assert code == 0, err
