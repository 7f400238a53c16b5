"""
Unit tests for the run configuration.
"""

import numpy as np
import pytest

from rkcq_scatter import ConfigurationError, FrequencyPoint
from rkcq_scatter.config import RunConfig, parse_key_values


class TestParseKeyValues:
    """Test the flat key = value reader."""

    def test_comments_and_blank_lines(self):
        values = parse_key_values("# header\n\ntableau = radau-iia-2  # two stages\nladder=8,16\n")
        assert values == {"tableau": "radau-iia-2", "ladder": "8,16"}

    def test_duplicate_key(self):
        with pytest.raises(ConfigurationError, match="twice"):
            parse_key_values("degree = 2\ndegree = 3\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigurationError, match="Line 1"):
            parse_key_values("degree 2\n")


class TestRunConfig:
    """Test validation and derived objects of RunConfig."""

    def test_defaults(self):
        """Test the default L-shape experiment."""
        config = RunConfig()
        assert config.tableau == "radau-iia-3"
        assert config.methods == ["standard", "differentiated"]
        assert config.radius is None
        assert config.build_space().n_dofs == 384
        assert config.build_tableau().stages == 3

    def test_parsing_from_text(self):
        text = """
        geometry = custom
        vertices = 0 0; 2 0; 2 1; 0 1
        ladder = 8, 16, 32
        methods = differentiated
        radius = 0.95
        manufactured_s = 3+0.5j
        normalize_errors = true
        """
        config = RunConfig.from_text(text)
        assert config.resolved_vertices() == [(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (0.0, 1.0)]
        assert config.ladder == [8, 16, 32]
        assert config.methods == ["differentiated"]
        assert config.radius == 0.95
        assert config.manufactured_s == 3 + 0.5j
        assert config.normalize_errors is True

    def test_overrides_take_precedence(self):
        config = RunConfig.from_text("threads = 2\n", threads=6, radius=None)
        assert config.threads == 6
        assert config.radius is None

    @pytest.mark.parametrize("text", [
        "ladder = 16, 8",
        "tableau = gauss-2",
        "methods = implicit",
        "radius = 1.5",
        "direction = 1, 1",
        "sigma0 = 0",
        "sigma0 = 5",
        "s_moduli = 0.5, 4",
        "manufactured_s = -1+1j",
        "geometry = custom",
        "vertices = 0 0; 1 0; 0 1",
        "colour = blue",
        "degree = two",
    ])
    def test_invalid_values(self, text):
        """Test that every invalid entry is rejected before any computation."""
        with pytest.raises(ConfigurationError):
            RunConfig.from_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            RunConfig.from_file(tmp_path / "missing.txt")

    def test_text_round_trip(self, tmp_path):
        """Test that the resolved config reads back into an equal configuration."""
        config = RunConfig.from_text("geometry = custom\nvertices = 0 0; 1 0; 1 1\nladder = 4,8\nradius = auto\n")
        path = config.write_resolved(tmp_path)
        assert path.name == "resolved-config.txt"
        assert "radius = auto" in path.read_text()
        assert RunConfig.from_file(path) == config

    def test_scan_frequencies(self):
        config = RunConfig.from_text("s_moduli = 4, 8\nn_angles = 3\ndelta = 0.2\n")
        frequencies = config.scan_frequencies()
        assert len(frequencies) == 6
        np.testing.assert_allclose(np.real(frequencies), [4, 4, 4, 8, 8, 8])
        angles = np.angle(frequencies[:3])
        np.testing.assert_allclose(angles, [-2.0 / 3.0 * (np.pi / 2 - 0.2), 0.0, 2.0 / 3.0 * (np.pi / 2 - 0.2)], atol=1e-14)
        assert all(FrequencyPoint(s, 1.0, 0.2).in_sector() for s in frequencies)
        assert RunConfig().scan_frequencies() == [4.0, 8.0, 16.0, 32.0, 64.0]

    def test_wave_and_refinement(self):
        config = RunConfig.from_text("geometry = square\ntarget_h = 0.5\ngrading = 1\ndegree = 1\ntau0 = 3\n")
        assert config.build_wave().tau0 == 3.0
        assert config.build_space().n_dofs == 16
        assert config.build_space(refinement=1).n_dofs == 32
