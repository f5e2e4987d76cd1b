import argparse
import logging
import sys

from src import load_config, setup_logging
from src.commands import (EXIT_INPUT, RunOptions, cmd_axioms, cmd_conjugate_points, cmd_em_index,
                          cmd_morse_index, cmd_oracle, cmd_sweep, cmd_verify)
from src.errors import ConfigError

# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', default='config.yaml', help="Settings file (YAML)")
    parser.add_argument('--galerkin', type=int, help="First Galerkin size N")
    parser.add_argument('--epsilon', type=float, help="First epsilon tried by the guard")
    parser.add_argument('--delta', type=float, help="Fixed regularization delta")
    parser.add_argument('--seed', type=int, help="Seed of every randomized choice")
    parser.add_argument('--tol', type=float, help="Relative rank tolerance")
    parser.add_argument('--out', help="Output file (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sturmflow',
        description="EM-index and regularized Morse index of indefinite higher-order Sturm forms.")
    commands = parser.add_subparsers(dest='command', required=True)

    for name, help_text in (('verify', "Compute both indices and compare them"),
                            ('conjugate-points', "List conjugate instants as CSV"),
                            ('em-index', "EM-index only"),
                            ('morse-index', "Regularized Morse index only"),
                            ('oracle', "Zero count of the classical scalar problem")):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument('problem', help="Problem config (JSON)")
        _add_run_flags(sub)

    axioms = commands.add_parser('axioms', help="Run the EM-index axiom battery")
    _add_run_flags(axioms)

    sweep = commands.add_parser('sweep', help="Verify along a one-parameter family")
    sweep.add_argument('problem', help="Problem config (JSON)")
    sweep.add_argument('--param', required=True, help="Dotted path of a real entry, e.g. omega.0.terms.0.re.0.0")
    sweep.add_argument('--from', dest='start', type=float, required=True)
    sweep.add_argument('--to', dest='stop', type=float, required=True)
    sweep.add_argument('--steps', type=int, required=True)
    _add_run_flags(sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    setup_logging(settings)
    logging.info(f"sturmflow {args.command} started.")

    options = RunOptions(galerkin=args.galerkin, epsilon=args.epsilon, delta=args.delta,
                         seed=args.seed, tol=args.tol, out=args.out)
    handlers = {
        'verify': cmd_verify,
        'conjugate-points': cmd_conjugate_points,
        'em-index': cmd_em_index,
        'morse-index': cmd_morse_index,
        'oracle': cmd_oracle,
    }
    if args.command == 'axioms':
        return cmd_axioms(settings, options)
    if args.command == 'sweep':
        return cmd_sweep(args.problem, args.param, args.start, args.stop, args.steps, settings, options)
    return handlers[args.command](args.problem, settings, options)


if __name__ == "__main__":
    sys.exit(main())
