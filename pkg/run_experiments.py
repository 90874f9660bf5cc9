# run_experiments.py
import argparse
import os
import sys

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.errors import ParameterError
from src.experiment_runner import (EXIT_CONFIG, EXIT_PASS, ExperimentConfig, ExperimentRunner,
                                   format_value)
from src.logger import set_log_level


def build_parser():
    parser = argparse.ArgumentParser(
        description="Numerical experiments for the compressible Oldroyd-B system")
    parser.add_argument('--config', help="JSON experiment configuration")
    parser.add_argument('--out', help="output directory")
    parser.add_argument('--seed', type=int, help="seed for random data and sampled states")
    parser.add_argument('--threads', type=int, help="worker threads for FFTs and time scans")
    parser.add_argument('--log-level', default=None,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='kind', required=True)

    def window_flags(p):
        p.add_argument('--orders', type=int, nargs='+', help="derivative orders m")
        p.add_argument('--t-min', type=float)
        p.add_argument('--t-max', type=float)
        p.add_argument('--samples', type=int, help="sample times in the window")
        p.add_argument('--nodes', type=int, help="initial radial quadrature nodes")
        p.add_argument('--rel-tol', type=float, help="quadrature node-doubling tolerance")
        p.add_argument('--c0', type=float, help="low-frequency cutoff radius")
        p.add_argument('--profile', type=float, nargs=8,
                       help="constant data (rho, u1, u2, u3, eta, divtau1..3)")

    linear = sub.add_parser('linear-decay', help="low-frequency decay of the linear semigroup")
    window_flags(linear)
    linear.add_argument('--kind', dest='norm_kind', choices=['symbol', 'heat'])

    driven = sub.add_parser('driven-tau', help="stress decay driven by the velocity rate")
    window_flags(driven)
    driven.add_argument('--tau0-sq', type=float, help="incoherent initial stress energy")

    scan = sub.add_parser('symbol-scan', help="certify the low-frequency spectral gap")
    scan.add_argument('--r-max', type=float)
    scan.add_argument('--radii', type=int)
    scan.add_argument('--states', type=int, help="sampled states per radius")

    def solver_flags(p):
        p.add_argument('--n', type=int, help="grid points per axis")
        p.add_argument('--dt', type=float)
        p.add_argument('--t-end', type=float)
        p.add_argument('--cadence', type=int, help="steps between snapshots")
        p.add_argument('--amplitude', type=float, help="H^3 norm of the initial data")
        p.add_argument('--k-max', type=int, help="initial data band limit")
        p.add_argument('--linear', action='store_true', help="disable nonlinear sources")

    simulate = sub.add_parser('simulate', help="pseudo-spectral run on the periodic box")
    solver_flags(simulate)
    simulate.add_argument('--oracle', action='store_true',
                          help="integrate the original system alongside")
    simulate.add_argument('--mu-list', type=float, nargs='+',
                          help="viscosities for the vanishing-viscosity comparison")
    simulate.add_argument('--nu-over-mu', type=float,
                          help="nu as a multiple of mu in the viscosity sweep")

    audit = sub.add_parser('energy-audit', help="energy functionals along a trajectory")
    solver_flags(audit)
    audit.add_argument('--snapshots', help="snapshot directory (default: run simulate)")
    audit.add_argument('--c-gen', type=float)
    audit.add_argument('--delta', type=float)
    audit.add_argument('--tol-diss', type=float)

    lemmas = sub.add_parser('check-lemmas', help="frequency-split and convolution checks")
    lemmas.add_argument('--bernstein-samples', type=int)
    return parser


def overrides_from(args):
    """Map subcommand flags onto config sections; unset flags stay None and are skipped"""
    get = lambda name: getattr(args, name, None)
    overrides = {
        'fit': {'t_min': get('t_min'), 't_max': get('t_max'), 'samples': get('samples')},
        'quadrature': {'nodes': get('nodes'), 'rel_tol': get('rel_tol'), 'c0': get('c0')},
        'scan': {'r_max': get('r_max'), 'radii': get('radii'), 'states': get('states')},
        'solver': {'dt': get('dt'), 't_end': get('t_end'), 'cadence': get('cadence'),
                   'oracle': get('oracle') or None,
                   'sources_enabled': False if get('linear') else None},
        'data': {'amplitude': get('amplitude'), 'k_max': get('k_max'),
                 'snapshots': get('snapshots')},
        'audit': {'c_gen': get('c_gen'), 'delta': get('delta'), 'tol_diss': get('tol_diss')},
        'experiment': {'orders': get('orders'), 'profile': get('profile'),
                       'norm_kind': get('norm_kind'), 'tau0_sq': get('tau0_sq'),
                       'mu_list': get('mu_list'), 'nu_over_mu': get('nu_over_mu'),
                       'bernstein_samples': get('bernstein_samples')},
        'grid': {'n': get('n')},
    }
    return overrides


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_log_level(args.log_level)

    print(f"Starting {args.kind} experiment...")
    print("=" * 50)

    try:
        config = ExperimentConfig.from_sources(args.kind, args.config, overrides_from(args),
                                               seed=args.seed, output_dir=args.out,
                                               threads=args.threads)
    except ParameterError as e:
        print(f"Configuration error: {e}")
        return EXIT_CONFIG

    code, summary = ExperimentRunner(config).run_experiment()

    print("=" * 50)
    print("EXPERIMENT PASSED" if code == EXIT_PASS else f"EXPERIMENT FAILED (exit code {code})")
    print("=" * 50)

    for fit in summary.get('fits', []):
        mark = "PASS" if fit['passed'] else "FAIL"
        print(f"• {fit['series']}: slope {format_value(fit['slope'])} "
              f"(target {format_value(fit['target'])} ± {format_value(fit['tol'])}) {mark}")
    for key in ('c0', 'kappa4', 'kappa2', 'equivalence_defect', 'mean_drift_rho',
                'mean_drift_eta', 'flagged_rows', 'bernstein_min_residual', 'error'):
        if key in summary:
            print(f"• {key}: {format_value(summary[key])}")

    print(f"\nResults saved to: {config.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
