"""
Experiment configuration.

A configuration file is flat ``key = value`` text. Blank lines and lines
starting with '#' are ignored, and so is anything after a ' #'. Example::

    # three blobs, thirty percent labels
    synthetic_classes = 3
    synthetic_per_class = 100
    synthetic_dims = 50
    lambda = 1000
    penalty = ETP
    repetitions = 5
    baselines = nmf, kmeans
"""

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from .errors import ConfigError, RonmfError
from .graph import WeightScheme
from .models import Hyperparams, PenaltySpec
from .noise import NoiseKind, NoiseSpec

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ('random', 'kmeans')
BASELINES = ('nmf', 'kmeans')
NORMALIZATIONS = ('maxabs',)


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Parameters of generate_synthetic.

    Attributes:
        classes: Number of blobs c
        per_class: Samples per blob
        dims: Feature count d
        separation: Mean shift of a blob on its own feature group
        spread: Within-blob standard deviation
    """
    classes: int = 3
    per_class: int = 100
    dims: int = 50
    separation: float = 3.0
    spread: float = 1.0

    def __post_init__(self):
        """Validate the blob parameters."""
        if self.classes < 2:
            raise ConfigError("synthetic data needs at least 2 classes")
        if self.per_class < 1 or self.dims < 1:
            raise ConfigError("synthetic per_class and dims must be positive")
        if self.dims < self.classes:
            raise ConfigError("synthetic dims must be at least the class count")
        if self.separation < 0 or self.spread < 0:
            raise ConfigError("synthetic separation and spread cannot be negative")

    def to_dict(self) -> dict:
        return {
            'classes': self.classes,
            'per_class': self.per_class,
            'dims': self.dims,
            'separation': self.separation,
            'spread': self.spread
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SyntheticSpec':
        return cls(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything run_experiment needs.

    Exactly one of dataset and synthetic is set. hyperparams.seed is the base
    seed; repetition i runs with seed base + i.

    Attributes:
        name: Label used by the results store
        dataset: Path of a matrix file
        format: Matrix format of dataset; inferred from the suffix when None
        synthetic: Blob parameters when no dataset is given
        hyperparams: Solver hyperparameters
        penalty: Residual penalty
        init: Initialization strategy, 'kmeans' or 'random'
        noise: Corruption applied to every repetition, or None
        metrics: Whether to evaluate against the ground truth
        output: Where to write the results, or None
        output_format: 'json' or 'csv'
        repetitions: Number of repetitions (>= 1)
        baselines: Extra methods run on the same data ('nmf', 'kmeans')
        normalize: 'maxabs' or None
        graph_scheme: kNN edge weights, binary or heat
        bandwidth: Heat-kernel bandwidth
    """
    name: str = "experiment"
    dataset: Optional[str] = None
    format: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    init: str = 'kmeans'
    noise: Optional[NoiseSpec] = None
    metrics: bool = True
    output: Optional[str] = None
    output_format: str = 'json'
    repetitions: int = 1
    baselines: Tuple[str, ...] = ()
    normalize: Optional[str] = None
    graph_scheme: WeightScheme = WeightScheme.BINARY
    bandwidth: Optional[float] = None

    def __post_init__(self):
        """Validate the configuration."""
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("set exactly one of dataset and synthetic_* keys")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.init not in INIT_STRATEGIES:
            raise ConfigError(f"init must be one of {', '.join(INIT_STRATEGIES)}, got {self.init!r}")
        if self.output_format not in ('json', 'csv'):
            raise ConfigError(f"output_format must be json or csv, got {self.output_format!r}")
        if self.format not in (None, 'csv', 'rawf64'):
            raise ConfigError(f"format must be csv or rawf64, got {self.format!r}")
        if self.normalize not in (None,) + NORMALIZATIONS:
            raise ConfigError(f"normalize must be maxabs, got {self.normalize!r}")
        object.__setattr__(self, 'baselines', tuple(self.baselines))
        for name in self.baselines:
            if name not in BASELINES:
                raise ConfigError(f"unknown baseline {name!r}; expected one of {', '.join(BASELINES)}")
        try:
            object.__setattr__(self, 'graph_scheme', WeightScheme(self.graph_scheme))
        except ValueError:
            raise ConfigError(f"unknown graph_scheme {self.graph_scheme!r}") from None
        if self.graph_scheme is WeightScheme.HEAT and not (self.bandwidth and self.bandwidth > 0):
            raise ConfigError("the heat graph scheme needs a positive bandwidth")

    @property
    def seed(self) -> int:
        return self.hyperparams.seed

    def check_paths(self):
        """Raise ConfigError when the dataset file does not exist."""
        if self.dataset is not None and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset not found: {self.dataset}")

    def with_hyperparams(self, **changes) -> 'ExperimentConfig':
        """Return a copy whose hyperparameters have some fields replaced."""
        return replace(self, hyperparams=self.hyperparams.with_overrides(**changes))

    def to_dict(self) -> dict:
        """Convert the configuration to a dictionary (the record's config echo)."""
        return {
            'name': self.name,
            'dataset': self.dataset,
            'format': self.format,
            'synthetic': None if self.synthetic is None else self.synthetic.to_dict(),
            'hyperparams': self.hyperparams.to_dict(),
            'penalty': self.penalty.to_dict(),
            'init': self.init,
            'noise': None if self.noise is None else self.noise.to_dict(),
            'metrics': self.metrics,
            'output': self.output,
            'output_format': self.output_format,
            'repetitions': self.repetitions,
            'baselines': list(self.baselines),
            'normalize': self.normalize,
            'graph_scheme': self.graph_scheme.value,
            'bandwidth': self.bandwidth
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        """Create an ExperimentConfig from a dictionary produced by to_dict()."""
        values = dict(data)
        if values.get('synthetic') is not None:
            values['synthetic'] = SyntheticSpec.from_dict(values['synthetic'])
        if values.get('noise') is not None:
            values['noise'] = NoiseSpec.from_dict(values['noise'])
        values['hyperparams'] = Hyperparams.from_dict(values['hyperparams'])
        values['penalty'] = PenaltySpec.from_dict(values['penalty'])
        values['baselines'] = tuple(values.get('baselines', ()))
        return cls(**values)


def _optional(convert: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        return None if text.lower() in ('', 'none', 'null') else convert(text)
    return parse


def _boolean(text: str) -> bool:
    lowered = text.lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _names(text: str) -> Tuple[str, ...]:
    return tuple(part.strip().lower() for part in text.split(',') if part.strip())


def _text(text: str) -> str:
    return text


HYPERPARAM_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    'lambda': ('lam', float),
    'mu': ('mu', float),
    'beta': ('beta', float),
    'rank': ('rank', _optional(int)),
    'labeled_fraction': ('labeled_fraction', float),
    'knn': ('knn', int),
    'max_outer_iters': ('max_outer_iters', int),
    'outer_tol': ('outer_tol', float),
    'eps1': ('eps1', float),
    'eps2': ('eps2', float),
    'ortho_penalty': ('ortho_penalty', _optional(float)),
    'seed': ('seed', int),
    'max_inner_iters': ('max_inner_iters', int),
    'monotone': ('monotone', _boolean),
    'orthogonal': ('orthogonal', _boolean),
}

OTHER_KEYS: Dict[str, Callable[[str], Any]] = {
    'name': _text,
    'penalty': str.upper,
    'tau': _optional(float),
    'gamma': _optional(float),
    'sigma': float,
    'init': str.lower,
    'noise': _optional(str.lower),
    'noise_ratio': float,
    'noise_sigma_scale': float,
    'noise_density': float,
    'noise_scale': float,
    'dataset': _optional(_text),
    'format': _optional(str.lower),
    'synthetic_classes': int,
    'synthetic_per_class': int,
    'synthetic_dims': int,
    'synthetic_separation': float,
    'synthetic_spread': float,
    'metrics': _boolean,
    'repetitions': int,
    'output': _optional(_text),
    'output_format': str.lower,
    'baselines': _names,
    'normalize': _optional(str.lower),
    'graph_scheme': str.lower,
    'bandwidth': _optional(float),
}

CONFIG_KEYS = tuple(HYPERPARAM_KEYS) + tuple(OTHER_KEYS)


def parse_config(text: str, source: str = "<config>") -> Dict[str, Any]:
    """
    Parse config text into a dictionary of typed values keyed by config key.

    Raises:
        ConfigError: On malformed lines, unknown or repeated keys and values
            that do not convert; the message names the line
    """
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(' #', 1)[0].strip()
        if not line or line.startswith('#'):
            continue
        where = f"{source} line {number}"
        if '=' not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        key = key.lower()
        if key in HYPERPARAM_KEYS:
            convert = HYPERPARAM_KEYS[key][1]
        elif key in OTHER_KEYS:
            convert = OTHER_KEYS[key]
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: key {key!r} given twice")
        try:
            values[key] = convert(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    return values


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    """
    Build an ExperimentConfig from parsed config values.

    Validation failures of any nested model are reported as ConfigError.
    """
    values = dict(values)
    try:
        hp = Hyperparams(**{
            HYPERPARAM_KEYS[key][0]: values.pop(key) for key in list(values) if key in HYPERPARAM_KEYS
        })

        penalty = PenaltySpec(
            kind=values.pop('penalty', 'ETP'),
            sigma=values.pop('sigma', None),
            tau=values.pop('tau', None),
            gamma=values.pop('gamma', None)
        )

        noise_params = {name: values.pop(f'noise_{name}') for name in ('ratio', 'sigma_scale', 'density', 'scale')
                        if f'noise_{name}' in values}
        kind = values.pop('noise', None)
        noise = NoiseSpec(kind=NoiseKind(kind), **noise_params) if kind else None

        synthetic_params = {name: values.pop(f'synthetic_{name}')
                            for name in ('classes', 'per_class', 'dims', 'separation', 'spread')
                            if f'synthetic_{name}' in values}
        synthetic = SyntheticSpec(**synthetic_params) if synthetic_params else None

        return ExperimentConfig(hyperparams=hp, penalty=penalty, noise=noise, synthetic=synthetic, **values)
    except ConfigError:
        raise
    except (RonmfError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Read and build the configuration stored at path."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    config = build_config(parse_config(text, source=str(path)))
    logger.info("loaded config %s (%d repetitions)", path, config.repetitions)
    return config


def hyperparam_fields() -> Tuple[str, ...]:
    """Names of the Hyperparams fields, in declaration order."""
    return tuple(f.name for f in fields(Hyperparams))
