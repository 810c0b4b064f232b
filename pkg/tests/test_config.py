import pytest
import yaml

from quasinehari.config import DEFAULTS, ConfigError, RunConfig


def test_defaults_valid():
    cfg = RunConfig.from_mapping(None)
    assert cfg["domain"]["shape"] == "ball"
    assert cfg.exponents == []
    assert cfg.solver_options.gtol == DEFAULTS["solver"]["gtol"]


def test_all_problems_reported_at_once():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_mapping({
            "domain": {"shape": "torus", "resolution": 4},
            "solver": {"gtol": "tiny", "gtoll": 1e-9},
            "threads": 0,
        })
    probs = exc.value.problems
    joined = "\n".join(probs)
    for path in ("domain.shape", "domain.resolution", "solver.gtol", "solver.gtoll: unknown key", "threads"):
        assert path in joined
    assert len(probs) == 5


def test_exponent_choices():
    cfg = RunConfig.from_mapping({"exponent": {"fractions": [0.9, 0.95]}})
    assert [e.p for e in cfg.exponents] == pytest.approx([10.8, 11.4])
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"exponent": {"p": 6.0, "p_list": [6.0]}})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"exponent": {"p": 13.0}})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"domain": {"dim": 2}})  # two dimensions need an explicit cap
    two = RunConfig.from_mapping({"domain": {"dim": 2}, "exponent": {"fractions": [0.98], "cap": 12.0}})
    assert two.exponents[0].outside_hypotheses


def test_annulus_radii_checked():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_mapping({"domain": {"shape": "annulus", "r_inner": 0.5, "r_outer": 0.2}})
    assert any("r_inner" in p for p in exc.value.problems)


def test_wrong_types():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_mapping({"solver": {"positive": "yes"}, "census": {"layout": "grid"}, "domain": []})
    joined = "\n".join(exc.value.problems)
    assert "solver.positive" in joined and "census.layout" in joined and "domain: expected a mapping" in joined
    with pytest.raises(ConfigError):
        RunConfig.from_mapping([1, 2])


def test_load_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("domain:\n  resolution: 12\nexponent:\n  p: 6.0\nseed: 3\n")
    cfg = RunConfig.load(path)
    assert cfg["domain"]["resolution"] == 12 and cfg["seed"] == 3
    assert cfg.domain_spec == {"shape": "ball", "dim": 3, "resolution": 12, "radius": 0.5, "center": 0.5}
    again = RunConfig.from_mapping(yaml.safe_load(cfg.to_yaml()))
    assert again.hash() == cfg.hash()


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("domain: [\n")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)


def test_override_and_hash():
    cfg = RunConfig.from_mapping({})
    other = cfg.override(seed=5, threads=None)
    assert other["seed"] == 5 and other["threads"] == cfg["threads"]
    assert other.hash() != cfg.hash()
    assert cfg.override().hash() == cfg.hash()
    with pytest.raises(ConfigError):
        cfg.override(threads=-1)
