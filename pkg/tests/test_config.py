"""
Unit tests for experiment configuration parsing.
"""

import tempfile
from pathlib import Path

import pytest

from src.ronmf.config import (
    ExperimentConfig,
    SyntheticSpec,
    build_config,
    hyperparam_fields,
    load_config,
    parse_config,
)
from src.ronmf.errors import ConfigError
from src.ronmf.graph import WeightScheme
from src.ronmf.models import Hyperparams, PenaltyKind
from src.ronmf.noise import NoiseKind


EXAMPLE = """
# three blobs, thirty percent labels
synthetic_classes = 3
synthetic_per_class = 100
synthetic_dims = 50
lambda = 1000
penalty = ETP
repetitions = 5
baselines = nmf, kmeans
"""


def config_from(text):
    return build_config(parse_config(text))


class TestParseConfig:
    """Test cases for the key = value reader."""

    def test_example(self):
        config = config_from(EXAMPLE)

        assert config.synthetic == SyntheticSpec(classes=3, per_class=100, dims=50)
        assert config.hyperparams.lam == 1000.0
        assert config.penalty.kind is PenaltyKind.ETP
        assert config.repetitions == 5
        assert config.baselines == ('nmf', 'kmeans')
        assert config.dataset is None

    def test_comments_and_blank_lines(self):
        values = parse_config("# heading\n\nknn = 7  # neighbours\n")

        assert values == {'knn': 7}

    def test_typed_values(self):
        values = parse_config("rank = none\nmonotone = off\nmu = 2.5\nPenalty = mcp\n")

        assert values == {'rank': None, 'monotone': False, 'mu': 2.5, 'penalty': 'MCP'}

    def test_unknown_key_names_the_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("knn = 5\nlearning_rate = 0.1\n")

    def test_repeated_key(self):
        with pytest.raises(ConfigError, match="given twice"):
            parse_config("knn = 5\nknn = 6\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="'knn'"):
            parse_config("knn = many\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("knn 5\n")


class TestBuildConfig:
    """Test cases for turning parsed values into an ExperimentConfig."""

    def test_dataset_and_hyperparams(self):
        config = config_from("dataset = data.csv\nknn = 7\nseed = 11\nlabeled_fraction = 0.1\n")

        assert config.dataset == 'data.csv'
        assert config.hyperparams == Hyperparams(knn=7, seed=11, labeled_fraction=0.1)
        assert config.seed == 11

    def test_penalty_parameters(self):
        config = config_from("dataset = d.csv\npenalty = scad\nsigma = 0.5\ntau = 4\n")

        assert config.penalty.kind is PenaltyKind.SCAD
        assert config.penalty.sigma == 0.5
        assert config.penalty.tau == 4.0

    def test_noise(self):
        config = config_from("dataset = d.csv\nnoise = gaussian\nnoise_ratio = 0.3\n")

        assert config.noise.kind is NoiseKind.GAUSSIAN
        assert config.noise.ratio == 0.3

    @pytest.mark.parametrize("text", [
        "knn = 5\n",
        "dataset = d.csv\nsynthetic_classes = 3\n",
        "dataset = d.csv\nlambda = -1\n",
        "dataset = d.csv\npenalty = mcp\ntau = 0.5\n",
        "dataset = d.csv\nnoise = speckle\n",
        "dataset = d.csv\nrepetitions = 0\n",
        "dataset = d.csv\nbaselines = nmf, svm\n",
        "dataset = d.csv\ngraph_scheme = heat\n",
        "dataset = d.csv\ninit = spectral\n",
        "synthetic_classes = 1\n",
    ])
    def test_invalid_configurations(self, text):
        with pytest.raises(ConfigError):
            config_from(text)

    def test_heat_graph(self):
        config = config_from("dataset = d.csv\ngraph_scheme = heat\nbandwidth = 2\n")

        assert config.graph_scheme is WeightScheme.HEAT

    def test_dictionary_form(self):
        config = config_from(EXAMPLE + "noise = salt_pepper\nnoise_density = 0.2\n")

        assert ExperimentConfig.from_dict(config.to_dict()) == config

    def test_with_hyperparams(self):
        config = config_from(EXAMPLE).with_hyperparams(lam=0.0)

        assert config.hyperparams.lam == 0.0
        assert config.repetitions == 5


class TestLoadConfig:
    """Test cases for reading configuration files."""

    def test_reads_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'exp.cfg'
            path.write_text(EXAMPLE)

            assert load_config(path).repetitions == 5

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config('/nonexistent/exp.cfg')

    def test_error_names_the_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'exp.cfg'
            path.write_text("bogus = 1\n")

            with pytest.raises(ConfigError, match="exp.cfg line 1"):
                load_config(path)

    def test_missing_dataset(self):
        config = config_from("dataset = /nonexistent/data.csv\n")

        with pytest.raises(ConfigError):
            config.check_paths()


def test_hyperparam_fields():
    assert hyperparam_fields()[0] == 'lam'
    assert 'orthogonal' in hyperparam_fields()
