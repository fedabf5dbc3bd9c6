"""Tests for settings models and experiment configuration loading."""

import json

import pytest
from pydantic import ValidationError as PydanticValidationError

from rangeloc.config import (
    ALGORITHMS,
    AlgorithmSettings,
    ExperimentConfig,
    SolverSettings,
    Sll1Settings,
    load_config,
    load_settings,
)
from rangeloc.core import GaussianNoise, LaplacianNoise
from rangeloc.errors import ConfigError, RangelocError


def _make_config(**overrides) -> ExperimentConfig:
    data = {
        "noise_grid": [{"kind": "gaussian", "sigma": 0.01}],
        "algorithms": ["slnn", "srls"],
        **overrides,
    }
    return ExperimentConfig.model_validate(data)


class TestSettings:
    def test_defaults(self):
        s = AlgorithmSettings()
        assert s.solver.solver == "CLARABEL"
        assert s.slcp.tightness_threshold == 1e2
        assert s.analysis.n_betas == 200
        assert s.analysis.gap_threshold == 0.02
        assert s.sll1.epsilon == 1e-2
        assert s.refine.enabled
        assert s.refine.max_nfev == 50

    def test_frozen(self):
        with pytest.raises(PydanticValidationError):
            SolverSettings().tolerance = 1.0

    def test_unknown_field(self):
        with pytest.raises(PydanticValidationError):
            SolverSettings(tolerence=1e-6)

    def test_tolerances_ordered(self):
        with pytest.raises(PydanticValidationError):
            SolverSettings(tolerance=1e-4, inaccurate_tolerance=1e-6)

    def test_sigma_big_derived_from_box(self):
        assert Sll1Settings().effective_sigma == pytest.approx(1e5)
        assert Sll1Settings(box_half_width=2.0).effective_sigma == pytest.approx(4e3)
        assert Sll1Settings(sigma_big=7.0).effective_sigma == 7.0


class TestExperimentConfig:
    def test_noise_grid_discriminated(self):
        config = _make_config(noise_grid=[
            {"kind": "gaussian", "sigma": 0.1},
            {"kind": "laplacian", "sigma": 0.4},
        ])
        assert isinstance(config.noise_grid[0], GaussianNoise)
        assert isinstance(config.noise_grid[1], LaplacianNoise)

    def test_slcp_requires_plane(self):
        with pytest.raises(PydanticValidationError, match="slcp requires n = 2"):
            _make_config(n=3, algorithms=["slcp"])

    def test_repeated_algorithms(self):
        with pytest.raises(PydanticValidationError):
            _make_config(algorithms=["slnn", "slnn"])

    def test_repeated_noise_points(self):
        with pytest.raises(PydanticValidationError, match="noise points must not repeat"):
            _make_config(noise_grid=[{"kind": "gaussian", "sigma": 0.1},
                                     {"kind": "gaussian", "sigma": 0.1}])

    def test_unknown_algorithm(self):
        with pytest.raises(PydanticValidationError):
            _make_config(algorithms=["sdr"])

    def test_runs_positive(self):
        with pytest.raises(PydanticValidationError):
            _make_config(runs=0)

    def test_every_algorithm_accepted(self):
        config = _make_config(algorithms=list(ALGORITHMS))
        assert config.algorithms == list(ALGORITHMS)

    def test_sll1_settings_use_box(self):
        config = _make_config(box_half_width=3.0)
        assert config.sll1_settings().box_half_width == 3.0


class TestLoadConfig:
    def test_load(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({
            "name": "small",
            "noise_grid": [{"kind": "selective", "sigma_base": 0.04, "sigma_outlier": 0.5}],
            "algorithms": ["sll1-ad"],
            "runs": 3,
            "settings": {"solver": {"solver": "SCS", "tolerance": 1e-6,
                                    "inaccurate_tolerance": 1e-4}},
        }))
        config = load_config(path)
        assert config.name == "small"
        assert config.settings.solver.solver == "SCS"
        assert config.noise_grid[0].sigma_outlier == 0.5

    def test_invalid_document(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"algorithms": []}')
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(tmp_path / "nope.json")
        assert isinstance(exc.value, RangelocError)

    def test_settings_file(self, tmp_path):
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"refine": {"enabled": False}, "analysis": {"n_betas": 12}}))
        settings = load_settings(path)
        assert not settings.refine.enabled
        assert settings.analysis.n_betas == 12
        assert settings.solver.solver == "CLARABEL"

    def test_invalid_settings_file(self, tmp_path):
        path = tmp_path / "settings.json"
        path.write_text(json.dumps({"refine": {"max_nfev": 0}}))
        with pytest.raises(ConfigError, match="settings.json"):
            load_settings(path)
