import argparse
import logging
import sys

from typing import List, Optional

from .mpc_bench_manager import BenchConfig, MpcBenchManager, MpcRunStatus

logger = logging.getLogger('mpc_app')

EXIT_CODES = {
    MpcRunStatus.COMPLETE: 0,
    MpcRunStatus.PARTIAL: 2,
    MpcRunStatus.FAILED: 1
}

def _slice(
    text: str
) -> List[int]:

    try:
        return [int(index) for index in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError(f'Expected comma-separated indices, got {text}')

def build_parser(
) -> argparse.ArgumentParser:

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='OCP config file (JSON)')
    common.add_argument('--seed', type=int, default=None, help='Seed of every random draw')
    common.add_argument('--out', default='results', help='Output directory')
    common.add_argument('--budget', type=int, default=None, help='Region budget of the certification')
    common.add_argument('--mode', choices=['flops', 'wallclock'], default='flops', help='Cost measurement mode')
    common.add_argument('--solver', choices=['daqp', 'admm', 'both'], default=None, help='Solvers to run')
    common.add_argument('--r-preset', type=int, nargs='+', choices=[900, 100, 50], default=None, help='Input weight presets')
    common.add_argument('--workers', type=int, default=None, help='Worker threads for flops-mode measurement')
    common.add_argument('--verbose', action='store_true', help='Log at DEBUG level')

    parameter = argparse.ArgumentParser(add_help=False)
    parameter.add_argument('--theta', default='box', help='box | box_b | pca:<file>[:<delta>] | poly:<file>')
    parameter.add_argument('--slice', type=_slice, default=None, help='Certify over the parameter coordinates i,j')

    parser = argparse.ArgumentParser(prog='mpccert', description='Complexity certification and benchmarks of MPC solvers')
    subparsers = parser.add_subparsers(dest='command', required=True)

    certify = subparsers.add_parser('certify', parents=[common, parameter], help='Certify the iteration count over a parameter set')
    certify.add_argument('--deadline', type=float, default=None, help='Per-solve budget for the real-time verdict')

    bench = subparsers.add_parser('bench', parents=[common, parameter], help='Compare solver costs on certified and uniform samples')
    bench.add_argument('--sampling', default='both', help='both | certified | uniform[:<M>[:<seed>]]')
    bench.add_argument('--tau', nargs=2, default=None, metavar=('A', 'B'), help='Compare two stored measurement files instead')

    sim = subparsers.add_parser('sim', parents=[common], help='Closed-loop quadrotor simulation')
    sim.add_argument('--trajectory', choices=['hover', 'step', 'figure8'], default='step')
    sim.add_argument('--deadline', type=float, default=None, help='Flops per controller tick')
    sim.add_argument('--hover-bias', type=float, default=0.0, help='Relative reduction of the hover command')

    pca = subparsers.add_parser('pca', parents=[common], help='PCA parameter set from a state log')
    pca.add_argument('--log', required=True, help='State log CSV')
    pca.add_argument('--delta', type=float, default=None, help='Inflation of the rotated bounds')

    return parser

def bench_config_from_args(
    args: argparse.Namespace
) -> BenchConfig:

    return BenchConfig(
        command=args.command,
        config_path=args.config,
        theta=getattr(args, 'theta', 'box'),
        sampling=getattr(args, 'sampling', 'both'),
        solver=args.solver,
        mode=args.mode,
        out_dir=args.out,
        budget=args.budget,
        seed=args.seed,
        workers=args.workers,
        deadline=getattr(args, 'deadline', None),
        r_presets=args.r_preset,
        theta_slice=getattr(args, 'slice', None),
        hover_bias=getattr(args, 'hover_bias', 0.0),
        trajectory=getattr(args, 'trajectory', 'step'),
        delta=getattr(args, 'delta', None),
        log_path=getattr(args, 'log', None),
        tau_files=None if getattr(args, 'tau', None) is None else tuple(args.tau)
    )

def main(
    argv: Optional[List[str]] = None
) -> int:

    args = build_parser().parse_args(argv)

    logging.basicConfig(
        format = '%(asctime)s %(process)d %(module)s %(levelname)s: %(message)s',
        level = logging.DEBUG if args.verbose else logging.INFO,
        stream = sys.stdout)

    logger.info(f'Start {args.command} with config {args.config}')

    try:
        manager = MpcBenchManager(bench_config_from_args(args))
    except Exception as exception:
        logger.error(f'Invalid arguments: {exception}')
        return EXIT_CODES[MpcRunStatus.FAILED]

    status = manager.run()

    for key, value in sorted(manager.report.get_document().items()):
        print(f'{key}: {value}')

    return EXIT_CODES[status]

if __name__ == '__main__':
    sys.exit(main())
