"""
Service layer running clustering experiments.

ExperimentService loads or generates the data, runs every repetition of the
protocol (label draw, graph, corruption, fit, baselines, evaluation) and
aggregates the results. Sweeps (bench, ablation, parameter_grid) reuse the same
repetition runner and can spread repetitions over worker processes.
"""

import logging
import time
from dataclasses import replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .baselines import kmeans, nmf_multiplicative
from .config import ExperimentConfig
from .dataio import emit_results, generate_synthetic, load_matrix, normalize_maxabs
from .errors import ConfigError, DataError, ExperimentError, RonmfError
from .graph import build_context
from .metrics import evaluate
from .models import METRIC_NAMES, UNLABELED, DataMatrix, RepetitionResult, ResultsRecord, validate
from .noise import NoiseKind, NoiseSpec, corrupt
from .repositories import ResultsStore
from .solver import fit

logger = logging.getLogger(__name__)

NOISE_RATIOS = (0.1, 0.3, 0.5, 0.7)
GRID_VALUES = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
ABLATIONS = ('full', 'no_graph', 'no_label', 'no_orthogonality')


def _evaluate(pred: np.ndarray, data: DataMatrix):
    known = data.labels != UNLABELED
    return evaluate(pred[known], data.labels[known])


def run_repetition(data: DataMatrix, cfg: ExperimentConfig, repetition: int) -> Dict[str, RepetitionResult]:
    """
    Run one repetition of the protocol on data.

    The repetition seed is cfg.seed + repetition; it drives the corruption,
    the label draw, the initialization and the baselines.

    Returns:
        Mapping from method name ('ronmf', then the requested baselines) to result
    """
    seed = cfg.seed + repetition
    hp = cfg.hyperparams.with_overrides(seed=seed)
    noisy = corrupt(data, cfg.noise, seed)
    results: Dict[str, RepetitionResult] = {}

    started = time.perf_counter()
    ctx = build_context(noisy, hp, cfg.graph_scheme, cfg.bandwidth)
    fitted = fit(noisy, ctx, hp, cfg.penalty, init_strategy=cfg.init)
    results['ronmf'] = RepetitionResult(
        repetition=repetition,
        seed=seed,
        metrics=_evaluate(fitted.labels, data) if cfg.metrics else None,
        iterations=fitted.iterations,
        feasibility=fitted.final_feasibility if fitted.trace else None,
        seconds=time.perf_counter() - started
    )

    for name in cfg.baselines:
        started = time.perf_counter()
        if name == 'nmf':
            baseline = nmf_multiplicative(noisy.values, hp.resolve_rank(noisy), seed=seed)
        else:
            baseline = kmeans(noisy.values, data.c, seed=seed)
        results[name] = RepetitionResult(
            repetition=repetition,
            seed=seed,
            metrics=_evaluate(baseline.labels, data) if cfg.metrics else None,
            iterations=len(baseline.objective_trace) - 1,
            feasibility=None,
            seconds=time.perf_counter() - started
        )

    logger.info(
        "repetition %d (seed %d): %s", repetition, seed,
        ", ".join(f"{m} acc={r.metrics.acc:.4f}" for m, r in results.items() if r.metrics is not None) or "done"
    )
    return results


def _repetition_task(data: DataMatrix, cfg: ExperimentConfig, repetition: int) -> Dict[str, RepetitionResult]:
    try:
        return run_repetition(data, cfg, repetition)
    except RonmfError as exc:
        raise ExperimentError(repetition, exc) from exc


def select_classes(data: DataMatrix, k: int, seed: Optional[int] = None) -> DataMatrix:
    """Keep the samples of k classes drawn at random, renumbered 0..k-1 in ascending order."""
    if not 2 <= k <= data.c:
        raise ConfigError(f"k must lie in [2, {data.c}], got {k}")
    rng = np.random.default_rng(seed)
    classes = np.sort(rng.choice(data.c, size=k, replace=False))
    keep = np.flatnonzero(np.isin(data.labels, classes))
    labels = np.searchsorted(classes, data.labels[keep])
    return DataMatrix(values=data.values[:, keep], labels=labels, c=k)


class ExperimentService:
    """Service running experiments and, when a store is given, persisting them."""

    def __init__(self, store: Optional[ResultsStore] = None):
        self.store = store

    def load_data(self, cfg: ExperimentConfig) -> DataMatrix:
        """
        Load or generate the dataset of a configuration and check it.

        Raises:
            ConfigError: If the dataset file does not exist
            DataError: If the data is invalid or has no labels
        """
        cfg.check_paths()
        if cfg.dataset is not None:
            data = load_matrix(cfg.dataset, cfg.format)
        else:
            spec = cfg.synthetic
            data = generate_synthetic(spec.classes, spec.per_class, spec.dims, spec.separation,
                                      seed=cfg.seed, spread=spec.spread)
        validate(data).raise_if_invalid()
        if not data.has_labels:
            raise DataError("experiments need ground-truth labels for the label draw")
        if cfg.normalize == 'maxabs':
            data = normalize_maxabs(data)
        return data

    def _run_many(self, tasks: Sequence[Tuple[DataMatrix, ExperimentConfig, int]], jobs: int):
        if isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1:
            raise ConfigError(f"jobs must be a positive integer, got {jobs!r}")
        if jobs == 1:
            return [_repetition_task(*task) for task in tasks]
        return Parallel(n_jobs=jobs)(delayed(_repetition_task)(*task) for task in tasks)

    def _record(self, cfg: ExperimentConfig, outcomes: Iterable[Dict[str, RepetitionResult]]) -> ResultsRecord:
        methods: Dict[str, List[RepetitionResult]] = {}
        for outcome in outcomes:
            for name, result in outcome.items():
                methods.setdefault(name, []).append(result)
        return ResultsRecord(config=cfg.to_dict(), methods=methods)

    def run_on_data(self, data: DataMatrix, cfg: ExperimentConfig, jobs: int = 1) -> ResultsRecord:
        """Run every repetition of cfg on already loaded data."""
        outcomes = self._run_many([(data, cfg, rep) for rep in range(cfg.repetitions)], jobs)
        return self._record(cfg, outcomes)

    def run_experiment(self, cfg: ExperimentConfig, jobs: int = 1, include_timing: bool = True) -> ResultsRecord:
        """
        Run an experiment, write its output file and store it.

        Raises:
            ExperimentError: If a repetition fails; carries the repetition index
        """
        data = self.load_data(cfg)
        logger.info("running %s: d=%d, n=%d, c=%d, %d repetitions",
                    cfg.name, data.d, data.n, data.c, cfg.repetitions)
        record = self.run_on_data(data, cfg, jobs)
        if cfg.output:
            emit_results(record, cfg.output, cfg.output_format, include_timing=include_timing)
        if self.store is not None:
            self.store.save(record, cfg.name)
        return record

    def bench(
        self,
        cfg: ExperimentConfig,
        ks: Optional[Iterable[int]] = None,
        ratios: Iterable[float] = NOISE_RATIOS,
        jobs: int = 1
    ) -> List[Dict[str, Any]]:
        """
        Sweep the number of clusters and the Gaussian noise ratio.

        For every k, k classes are drawn at random (seed cfg.seed + k) and the
        protocol runs on their samples. For every ratio, the full data is
        corrupted with that ratio of Gaussian noise. All repetitions of all
        settings are scheduled together.

        Returns:
            Plot-ready rows: sweep, value, method and per-metric mean and std
        """
        data = self.load_data(cfg)
        ks = list(range(2, data.c + 1)) if ks is None else list(ks)
        sigma_scale = cfg.noise.sigma_scale if cfg.noise is not None else 0.1

        settings: List[Tuple[str, float, DataMatrix, ExperimentConfig]] = []
        for k in ks:
            settings.append(('k', k, select_classes(data, k, cfg.seed + k), replace(cfg, noise=None)))
        for ratio in ratios:
            noise = NoiseSpec(NoiseKind.GAUSSIAN, ratio=ratio, sigma_scale=sigma_scale)
            settings.append(('noise_ratio', ratio, data, replace(cfg, noise=noise)))

        tasks = [(subset, setting_cfg, rep)
                 for _, _, subset, setting_cfg in settings for rep in range(cfg.repetitions)]
        outcomes = self._run_many(tasks, jobs)

        rows = []
        for index, (sweep, value, _, setting_cfg) in enumerate(settings):
            chunk = outcomes[index * cfg.repetitions:(index + 1) * cfg.repetitions]
            record = self._record(setting_cfg, chunk)
            if self.store is not None:
                self.store.save(record, f"{cfg.name}:{sweep}={value}")
            rows.extend(self._summary_rows(record, {'sweep': sweep, 'value': value}))
        return rows

    def ablation(self, cfg: ExperimentConfig, jobs: int = 1) -> Dict[str, ResultsRecord]:
        """
        Run the full model and the variants without the graph term (lambda = 0),
        without the label term (mu = 0) and without the orthogonality constraint.
        """
        data = self.load_data(cfg)
        variants = {
            'full': cfg,
            'no_graph': cfg.with_hyperparams(lam=0.0),
            'no_label': cfg.with_hyperparams(mu=0.0),
            'no_orthogonality': cfg.with_hyperparams(orthogonal=False),
        }
        records = {}
        for name, variant in variants.items():
            records[name] = self.run_on_data(data, replace(variant, baselines=()), jobs)
            if self.store is not None:
                self.store.save(records[name], f"{cfg.name}:{name}")
        return records

    def parameter_grid(
        self,
        cfg: ExperimentConfig,
        lambdas: Iterable[float] = GRID_VALUES,
        mus: Iterable[float] = GRID_VALUES,
        jobs: int = 1
    ) -> List[Dict[str, Any]]:
        """
        Evaluate every (lambda, mu) pair.

        Returns:
            One row per pair with the mean ACC and NMI of the model
        """
        data = self.load_data(cfg)
        pairs = [(lam, mu) for lam in lambdas for mu in mus]
        settings = [replace(cfg.with_hyperparams(lam=lam, mu=mu), baselines=()) for lam, mu in pairs]
        tasks = [(data, setting, rep) for setting in settings for rep in range(cfg.repetitions)]
        outcomes = self._run_many(tasks, jobs)

        rows = []
        for index, ((lam, mu), setting) in enumerate(zip(pairs, settings)):
            record = self._record(setting, outcomes[index * cfg.repetitions:(index + 1) * cfg.repetitions])
            summary = record.summary('ronmf')
            rows.append({'lambda': lam, 'mu': mu,
                         'acc_mean': summary['acc']['mean'], 'nmi_mean': summary['nmi']['mean']})
        return rows

    @staticmethod
    def _summary_rows(record: ResultsRecord, key: Dict[str, Any]) -> List[Dict[str, Any]]:
        rows = []
        for method in record.methods:
            row = dict(key, method=method)
            for name, stats in record.summary(method).items():
                row[f'{name}_mean'] = stats['mean']
                row[f'{name}_std'] = stats['std']
            rows.append(row)
        return rows


SWEEP_COLUMNS = ('sweep', 'value', 'method') + tuple(
    f'{name}_{stat}' for name in METRIC_NAMES for stat in ('mean', 'std')
)
GRID_COLUMNS = ('lambda', 'mu', 'acc_mean', 'nmi_mean')
