"""
Command line driver for ronmf.

Subcommands:
    run <config>        run an experiment and emit its results
    synth               write a synthetic blob dataset
    noise <in> <out>    corrupt a matrix file
    eval <pred> <truth> print the four clustering metrics as JSON
    bench <config>      sweep the cluster count and the Gaussian noise ratio
    ablation <config>   compare the model against its ablated variants
    grid <config>       lambda/mu sensitivity grid
    show [id]           list stored experiments or print one

Failures print a single line ``error:<kind>:<message>`` to stderr and exit
with 2 (configuration), 3 (data) or 4 (numerical abort); anything unexpected
is reported the same way as ``error:internal:<message>`` with exit code 1.
"""

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from typing import Iterator, List, Optional

from .config import ExperimentConfig, load_config
from .dataio import emit_results, generate_synthetic, load_matrix, read_labels, save_matrix, write_rows
from .errors import ConfigError, RonmfError
from .metrics import evaluate
from .models import PenaltySpec, ResultsRecord, validate
from .noise import NoiseKind, NoiseSpec, corrupt
from .persistence import Database
from .repositories import ResultsStore
from .service import GRID_COLUMNS, NOISE_RATIOS, SWEEP_COLUMNS, ExperimentService

logger = logging.getLogger(__name__)

# flag -> (Hyperparams field, type)
HYPERPARAM_FLAGS = (
    ('--lambda', 'lam', float),
    ('--mu', 'mu', float),
    ('--beta', 'beta', float),
    ('--rank', 'rank', int),
    ('--labeled-fraction', 'labeled_fraction', float),
    ('--knn', 'knn', int),
    ('--max-outer-iters', 'max_outer_iters', int),
    ('--outer-tol', 'outer_tol', float),
    ('--eps1', 'eps1', float),
    ('--eps2', 'eps2', float),
    ('--ortho-penalty', 'ortho_penalty', float),
    ('--seed', 'seed', int),
    ('--max-inner-iters', 'max_inner_iters', int),
)


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors follow the one-line error format."""

    def error(self, message):
        sys.stderr.write(f"error:{ConfigError.kind}:{message}\n")
        sys.exit(ConfigError.exit_code)


def _add_experiment_flags(parser: argparse.ArgumentParser):
    parser.add_argument('config', help='experiment config file')
    group = parser.add_argument_group('hyperparameter overrides')
    for flag, dest, kind in HYPERPARAM_FLAGS:
        group.add_argument(flag, dest=dest, type=kind, default=None)
    group.add_argument('--monotone', dest='monotone', action=argparse.BooleanOptionalAction, default=None)
    group.add_argument('--orthogonal', dest='orthogonal', action=argparse.BooleanOptionalAction, default=None)
    group.add_argument('--penalty', choices=('MCP', 'SCAD', 'ETP'), type=str.upper)
    group.add_argument('--sigma', type=float)
    group.add_argument('--tau', type=float)
    group.add_argument('--gamma', type=float)
    group.add_argument('--init', choices=('random', 'kmeans'))
    group.add_argument('--repetitions', type=int)
    group.add_argument('--normalize', choices=('maxabs',))
    group.add_argument('--baselines', type=lambda text: tuple(p.strip() for p in text.split(',') if p.strip()))
    parser.add_argument('--jobs', type=int, default=1, help='worker processes for repetitions')
    parser.add_argument('--db', help='results database path')
    parser.add_argument('--store', action='store_true', help='save the results in the database')


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand."""
    parser = CliParser(prog='ronmf', description='Robust orthogonal NMF clustering.')
    parser.add_argument('--log-level', default='WARNING',
                        choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'), type=str.upper)
    commands = parser.add_subparsers(dest='command', required=True, parser_class=CliParser)

    run = commands.add_parser('run', help='run an experiment')
    _add_experiment_flags(run)
    run.add_argument('--output', help='results file (overrides the config)')
    run.add_argument('--format', dest='output_format', choices=('json', 'csv'))
    run.add_argument('--no-timing', action='store_true', help='leave wall times out of the output')

    synth = commands.add_parser('synth', help='write a synthetic dataset')
    synth.add_argument('output')
    synth.add_argument('--classes', type=int, default=3)
    synth.add_argument('--per-class', type=int, default=100)
    synth.add_argument('--dims', type=int, default=50)
    synth.add_argument('--separation', type=float, default=3.0)
    synth.add_argument('--spread', type=float, default=1.0)
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--format', choices=('csv', 'rawf64'))

    noise = commands.add_parser('noise', help='corrupt a matrix file')
    noise.add_argument('input')
    noise.add_argument('output')
    noise.add_argument('--kind', choices=[k.value for k in NoiseKind], default='gaussian')
    noise.add_argument('--ratio', type=float, default=0.1)
    noise.add_argument('--sigma-scale', type=float, default=0.1)
    noise.add_argument('--density', type=float, default=0.1)
    noise.add_argument('--scale', type=float, default=1.0)
    noise.add_argument('--seed', type=int, default=0)
    noise.add_argument('--format', choices=('csv', 'rawf64'), help='format of both files')

    evaluate_cmd = commands.add_parser('eval', help='score predicted labels')
    evaluate_cmd.add_argument('pred')
    evaluate_cmd.add_argument('truth')

    bench = commands.add_parser('bench', help='cluster-count and noise sweeps')
    _add_experiment_flags(bench)
    bench.add_argument('--ks', help='cluster counts, e.g. 2-5 or 2,4,6')
    bench.add_argument('--ratios', type=lambda text: [float(p) for p in text.split(',')], default=list(NOISE_RATIOS))
    bench.add_argument('--output', required=True, help='CSV file for the sweep rows')

    ablation = commands.add_parser('ablation', help='ablated variants')
    _add_experiment_flags(ablation)
    ablation.add_argument('--output', help='JSON file with one record per variant')

    grid = commands.add_parser('grid', help='lambda/mu sensitivity grid')
    _add_experiment_flags(grid)
    grid.add_argument('--output', required=True, help='CSV file for the grid rows')

    show = commands.add_parser('show', help='list stored experiments or print one')
    show.add_argument('id', nargs='?')
    show.add_argument('--db', help='results database path')
    return parser


def parse_ks(text: Optional[str]) -> Optional[List[int]]:
    """Parse '2-5' or '2,4,6' into a list of cluster counts."""
    if text is None:
        return None
    try:
        if '-' in text:
            low, high = (int(part) for part in text.split('-', 1))
            return list(range(low, high + 1))
        return [int(part) for part in text.split(',')]
    except ValueError:
        raise ConfigError(f"bad --ks value {text!r}") from None


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Return cfg with every flag given on the command line applied."""
    changes = {dest: getattr(args, dest) for _, dest, _ in HYPERPARAM_FLAGS if getattr(args, dest) is not None}
    for dest in ('monotone', 'orthogonal'):
        if getattr(args, dest) is not None:
            changes[dest] = getattr(args, dest)
    try:
        cfg = cfg.with_hyperparams(**changes)
        penalty = cfg.penalty
        if args.penalty is not None and args.penalty != penalty.kind.value:
            penalty = PenaltySpec(args.penalty, sigma=penalty.sigma)
        if args.sigma is not None:
            penalty = penalty.with_sigma(args.sigma)
        if args.tau is not None or args.gamma is not None:
            penalty = replace(penalty, tau=args.tau if args.tau is not None else penalty.tau,
                              gamma=args.gamma if args.gamma is not None else penalty.gamma)
        others = {name: getattr(args, name) for name in ('init', 'repetitions', 'normalize', 'baselines')
                  if getattr(args, name) is not None}
        if args.command == 'run':
            for name in ('output', 'output_format'):
                if getattr(args, name) is not None:
                    others[name] = getattr(args, name)
        return replace(cfg, penalty=penalty, **others)
    except ConfigError:
        raise
    except (RonmfError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


@contextmanager
def _service(args: argparse.Namespace) -> Iterator[ExperimentService]:
    """Yield the service for a command, closing its results database afterwards."""
    if not getattr(args, 'store', False):
        yield ExperimentService()
        return
    with Database(args.db) as db:
        yield ExperimentService(ResultsStore(db))


def _print_summary(record: ResultsRecord):
    for method in record.methods:
        summary = record.summary(method)
        parts = [f"{name}={stats['mean']:.4f}±{stats['std']:.4f}" for name, stats in summary.items()]
        print(f"{method}: " + " ".join(parts))


def cmd_run(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    with _service(args) as service:
        record = service.run_experiment(cfg, jobs=args.jobs, include_timing=not args.no_timing)
    _print_summary(record)
    return 0


def cmd_synth(args) -> int:
    try:
        data = generate_synthetic(args.classes, args.per_class, args.dims, args.separation,
                                  seed=args.seed, spread=args.spread)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    save_matrix(data, args.output, args.format)
    print(f"wrote {data.d}x{data.n} matrix with {data.c} classes to {args.output}")
    return 0


def cmd_noise(args) -> int:
    data = load_matrix(args.input, args.format)
    validate(data).raise_if_invalid()
    try:
        spec = NoiseSpec(NoiseKind(args.kind), ratio=args.ratio, sigma_scale=args.sigma_scale,
                         density=args.density, scale=args.scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    save_matrix(corrupt(data, spec, args.seed), args.output, args.format)
    return 0


def cmd_eval(args) -> int:
    report = evaluate(read_labels(args.pred), read_labels(args.truth))
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    with _service(args) as service:
        rows = service.bench(cfg, ks=parse_ks(args.ks), ratios=args.ratios, jobs=args.jobs)
    write_rows(rows, args.output, SWEEP_COLUMNS)
    print(f"wrote {len(rows)} rows to {args.output}")
    return 0


def cmd_ablation(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    with _service(args) as service:
        records = service.ablation(cfg, jobs=args.jobs)
    for name, record in records.items():
        acc = record.summary('ronmf')['acc']
        print(f"{name}: acc={acc['mean']:.4f}±{acc['std']:.4f}")
    if args.output:
        payload = {name: record.to_dict() for name, record in records.items()}
        try:
            with open(args.output, 'w') as handle:
                json.dump(payload, handle, sort_keys=True, indent=2)
        except OSError as exc:
            raise ConfigError(f"cannot write {args.output}: {exc.strerror or exc}") from None
    return 0


def cmd_grid(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    with _service(args) as service:
        rows = service.parameter_grid(cfg, jobs=args.jobs)
    write_rows(rows, args.output, GRID_COLUMNS)
    print(f"wrote {len(rows)} rows to {args.output}")
    return 0


def cmd_show(args) -> int:
    with Database(args.db) as db:
        store = ResultsStore(db)
        if args.id is None:
            for name, record in store.list():
                print(f"{record.id}  {record.created_at.isoformat(timespec='seconds')}  {name}")
            return 0
        record = store.load(args.id)
        if record is None:
            raise ConfigError(f"no stored experiment with id {args.id}")
        print(json.dumps(record.to_dict(), sort_keys=True, indent=2))
    return 0


COMMANDS = {
    'run': cmd_run,
    'synth': cmd_synth,
    'noise': cmd_noise,
    'eval': cmd_eval,
    'bench': cmd_bench,
    'ablation': cmd_ablation,
    'grid': cmd_grid,
    'show': cmd_show,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format='%(levelname)s %(name)s: %(message)s')
    try:
        return COMMANDS[args.command](args)
    except RonmfError as exc:
        message = " ".join(str(exc).split())
        sys.stderr.write(f"error:{exc.kind}:{message}\n")
        return exc.exit_code
    except Exception as exc:
        logger.debug("unexpected failure", exc_info=True)
        message = " ".join(str(exc).split()) or type(exc).__name__
        sys.stderr.write(f"error:internal:{message}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
