# src/experiment_runner.py
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from config import (AUDIT_CONFIG, DEFAULT_MODEL_PARAMS, DEFAULT_SEED, DEFAULT_THREADS,
                    FIT_CONFIG, GRID_CONFIG, OUTPUT_DIR, QUADRATURE_CONFIG, SCAN_CONFIG,
                    SOLVER_CONFIG, TOLERANCES, VISCOSITY_CONFIG)
from src.data_manager import DataManager
from src.decay_analyser import (DECAY_TARGETS, TOP_ORDER_TAU_TARGET, DecayAnalyser,
                                DecaySeries, sample_times)
from src.decay_quadrature import RadialQuadrature, driven_tau_decays, lowfreq_decay_norms
from src.energy_audit import EnergyAuditor, FunctionalWeights
from src.errors import (BlowUpError, DegenerateModeError, DomainError, FitError,
                        GridMismatchError, ParameterError, QuadratureError,
                        SemigroupMismatchError)
from src.linear_symbol import default_radii, fit_semigroup_bound, scan_critical_radius
from src.logger import setup_logger
from src.model_core import ModelParams, derive_scaled, provenance
from src.solvers.initial_data import random_initial_data
from src.solvers.original_solver import oracle_original_system
from src.solvers.reformulated_solver import ReformulatedSolver
from src.solvers.vanishing_viscosity import vanishing_viscosity_experiment
from src.spectral_field import Grid, SpectralOps

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ABORT = 2
EXIT_CONFIG = 3

EXPERIMENT_KINDS = ('linear-decay', 'driven-tau', 'symbol-scan', 'simulate',
                    'energy-audit', 'check-lemmas')

SCAN_COLUMNS = ['r', 'min_re_eig4', 'min_re_eig2', 'kappa4', 'kappa2', 'certified']
AUDIT_COLUMNS = ['t', 'H1', 'H2', 'H3', 'N1', 'N2', 'N3',
                 'residual1', 'residual2', 'residual3', 'flags']

SECTION_DEFAULTS = {
    'grid': GRID_CONFIG,
    'quadrature': QUADRATURE_CONFIG,
    'fit': FIT_CONFIG,
    'scan': SCAN_CONFIG,
    'solver': {
        'dt': SOLVER_CONFIG['dt'],
        't_end': SOLVER_CONFIG['t_end'],
        'cadence': SOLVER_CONFIG['cadence'],
        'cfl': SOLVER_CONFIG['cfl'],
        'sources_enabled': True,
        'oracle': False,
    },
    'data': {
        'amplitude': SOLVER_CONFIG['amplitude'],
        'k_max': SOLVER_CONFIG['k_max'],
        'means': [0.0, 0.0],
        'components': None,
        'snapshots': None,
    },
    'audit': {
        **AUDIT_CONFIG,
        'monotone_rel': TOLERANCES['monotone_rel'],
        'monotone_abs': TOLERANCES['monotone_abs'],
    },
    'experiment': {
        'orders': None,
        'profile': None,
        'norm_kind': 'symbol',
        'tau0_sq': 0.0,
        'c0_from_scan': True,
        'mu_list': None,
        'nu_over_mu': VISCOSITY_CONFIG['nu_over_mu'],
        'viscosity_times': [1.0],
        'bernstein_samples': 100,
        'bernstein_pairs': [[1, 0], [2, 1], [3, 0]],
        'convolution_pairs': [[2.5, 1.5], [3.5, 0.5]],
        'convolution_times': [0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0],
        'semigroup_radii': 50,
        'semigroup_times': 40,
    },
}


def _merge_section(name, defaults, values):
    if values is None:
        return dict(defaults)
    if not isinstance(values, dict):
        raise ParameterError(f"config section '{name}' must be a mapping")
    unknown = set(values) - set(defaults)
    if unknown:
        raise ParameterError(f"Unknown keys in section '{name}': {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(values)
    return merged


@dataclass
class ExperimentConfig:
    """Everything one experiment needs: parameters, discretisation, tolerances, options"""
    kind: str
    params: ModelParams
    grid: Grid
    quadrature: dict
    fit: dict
    scan: dict
    solver: dict
    data: dict
    audit: dict
    options: dict
    seed: int = DEFAULT_SEED
    output_dir: Path = Path(OUTPUT_DIR)
    threads: int = DEFAULT_THREADS
    source: str = field(default='defaults')

    @classmethod
    def from_sources(cls, kind, path=None, overrides=None, seed=None, output_dir=None,
                     threads=None):
        """Defaults, then the JSON file at `path`, then `overrides` (section -> dict) from the CLI"""
        if kind not in EXPERIMENT_KINDS:
            raise ParameterError(f"Unknown experiment kind '{kind}'")
        document = {}
        if path is not None:
            try:
                with open(path, 'r', encoding='utf-8') as f:
                    document = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ParameterError(f"Cannot read config file {path}: {e}") from e
            if not isinstance(document, dict):
                raise ParameterError(f"{path} must hold a JSON object")
        unknown = set(document) - set(SECTION_DEFAULTS) - {'params'}
        if unknown:
            raise ParameterError(f"Unknown config sections: {sorted(unknown)}")

        sections = {}
        for name, defaults in SECTION_DEFAULTS.items():
            sections[name] = _merge_section(name, defaults, document.get(name))
        params = _merge_section('params', DEFAULT_MODEL_PARAMS, document.get('params'))

        for name, values in (overrides or {}).items():
            values = {key: value for key, value in values.items() if value is not None}
            if name == 'params':
                params = _merge_section(name, params, values)
            elif name in sections:
                sections[name] = _merge_section(name, sections[name], values)
            else:
                raise ParameterError(f"Unknown override section '{name}'")

        grid_section = sections.pop('grid')
        try:
            grid = Grid(int(grid_section['n']), float(grid_section['length']))
        except (TypeError, ValueError) as e:
            raise ParameterError(f"Invalid grid section: {e}") from e

        threads = DEFAULT_THREADS if threads is None else int(threads)
        if threads < 1:
            raise ParameterError("threads must be at least 1")
        return cls(
            kind=kind,
            params=ModelParams.from_dict(params),
            grid=grid,
            options=sections.pop('experiment'),
            seed=DEFAULT_SEED if seed is None else int(seed),
            output_dir=Path(output_dir or OUTPUT_DIR),
            threads=threads,
            source=str(path) if path else 'defaults',
            **sections,
        )

    def to_dict(self):
        return {
            'kind': self.kind,
            'params': self.params.to_dict(),
            'grid': {'n': self.grid.n, 'length': self.grid.length},
            'quadrature': self.quadrature,
            'fit': self.fit,
            'scan': self.scan,
            'solver': self.solver,
            'data': self.data,
            'audit': self.audit,
            'experiment': self.options,
            'seed': self.seed,
            'threads': self.threads,
            'source': self.source,
        }


class ExperimentRunner:
    """Runs one configured experiment, writes its tables and summary, returns an exit code"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.logger = setup_logger("experiment_runner")
        self.data_manager = DataManager(config.output_dir)
        self.analyser = DecayAnalyser(config.fit['min_samples'])
        self.params = config.params
        self.sp = derive_scaled(config.params)
        self.handlers = {
            'linear-decay': self._linear_decay,
            'driven-tau': self._driven_tau,
            'symbol-scan': self._symbol_scan,
            'simulate': self._simulate,
            'energy-audit': self._energy_audit,
            'check-lemmas': self._check_lemmas,
        }

    @property
    def provenance(self):
        header = provenance(self.params, self.sp)
        header['experiment'] = self.config.kind
        header['seed'] = self.config.seed
        header['grid_n'] = self.config.grid.n
        return header

    def run_experiment(self):
        """(exit code, summary dict); library errors become codes 1-3"""
        kind = self.config.kind
        self.logger.info(f"Running experiment '{kind}' (seed {self.config.seed})")
        summary = {'experiment': kind, 'config': self.config.to_dict()}
        try:
            passed, details = self.handlers[kind]()
            code = EXIT_PASS if passed else EXIT_FAIL
            summary.update(details)
        except (ParameterError, GridMismatchError) as e:
            self.logger.error(f"Configuration error: {e}")
            code = EXIT_CONFIG
            summary['error'] = str(e)
        except FitError as e:
            self.logger.error(f"Fit failed: {e}")
            code = EXIT_FAIL
            summary['error'] = str(e)
        except (BlowUpError, QuadratureError, DomainError, SemigroupMismatchError,
                DegenerateModeError) as e:
            self.logger.error(f"Run aborted: {type(e).__name__}: {e}")
            code = EXIT_ABORT
            summary['error'] = f"{type(e).__name__}: {e}"
        summary['passed'] = code == EXIT_PASS
        summary['exit_code'] = code
        self.data_manager.save_summary(summary, name=f"{kind.replace('-', '_')}_summary")
        return code, summary

    # helpers

    def _map_times(self, fn, times):
        """fn(t) for every t, on a thread pool when more than one thread is configured"""
        if self.config.threads == 1:
            return [fn(t) for t in times]
        with ThreadPoolExecutor(max_workers=self.config.threads) as executor:
            return list(executor.map(fn, times))

    def _orders(self, allowed):
        orders = self.config.options['orders']
        if orders is None:
            return list(range(allowed))
        orders = sorted({int(m) for m in np.atleast_1d(orders)})
        if not orders or orders[0] < 0 or orders[-1] >= allowed:
            raise ParameterError(f"orders must lie in 0..{allowed - 1}")
        return orders

    def _profile(self):
        profile = self.config.options['profile']
        return None if profile is None else np.asarray(profile, dtype=float)

    def _cutoff(self):
        """Configured c0, reduced to the certified radius unless disabled"""
        c0 = float(self.config.quadrature['c0'])
        if not self.config.options['c0_from_scan']:
            return c0
        radii = scan_critical_radius(self.sp, self.params,
                                     default_radii(self.config.scan['r_max'], self.config.scan['radii']),
                                     n_states=0, seed=self.config.seed)
        if not radii.certified:
            raise ParameterError("critical-radius scan certified no low-frequency ball")
        if radii.c0 < c0:
            self.logger.warning(f"Reducing c0 from {c0:g} to the certified radius {radii.c0:.4g}")
        return min(c0, radii.c0)

    def _quadrature(self):
        q = self.config.quadrature
        return RadialQuadrature(self._cutoff(), int(q['nodes']), int(q['max_nodes']),
                                float(q['rel_tol']))

    def _window(self):
        return (float(self.config.fit['t_min']), float(self.config.fit['t_max']))

    def _fit_series(self, times, norms, orders, prefix, target_of, tol):
        checks = []
        series_by_order = {}
        for j, m in enumerate(orders):
            series = DecaySeries(times, norms[:, j], label=f"{prefix}_m{m}", m=m,
                                 window=self._window())
            self.analyser.fit_slope(series)
            self.data_manager.save_table(self.analyser.series_frame(series),
                                         f"{prefix}_m{m}", self.provenance)
            checks.append(self.analyser.check_exponent(series, target_of(m), tol))
            series_by_order[m] = series
        return checks, series_by_order

    # experiments

    def _linear_decay(self):
        orders = self._orders(4)
        quadrature = self._quadrature()
        profile = self._profile()
        kind = self.config.options['norm_kind']
        times = sample_times(self._window(), int(self.config.fit['samples']))
        self.logger.info(f"Linear decay: orders {orders}, {len(times)} times, c0={quadrature.c0:.4g}")

        rows = self._map_times(
            lambda t: lowfreq_decay_norms(orders, t, self.sp, self.params, profile, quadrature, kind),
            times)
        norms = np.vstack(rows)
        checks, _ = self._fit_series(times, norms, orders, 'linear_decay',
                                     DECAY_TARGETS['linear'], float(self.config.fit['slope_tol']))
        frame, verdict = self.analyser.summarise(checks)
        self.data_manager.save_table(frame, "linear_decay_fits", self.provenance)
        return verdict, {'c0': quadrature.c0, 'fits': frame.to_dict('records')}

    def _driven_tau(self):
        orders = self._orders(3)
        quadrature = self._quadrature()
        profile = self._profile()
        tau0_sq = float(self.config.options['tau0_sq'])
        times = sample_times(self._window(), int(self.config.fit['samples']))
        self.logger.info(f"Driven stress decay: orders {orders}, {len(times)} times")

        rows = self._map_times(
            lambda t: driven_tau_decays(orders, t, self.sp, self.params, profile, tau0_sq, quadrature),
            times)
        norms = np.vstack(rows)
        checks, series = self._fit_series(times, norms, orders, 'driven_tau',
                                          DECAY_TARGETS['driven_tau'],
                                          float(self.config.fit['slope_tol']))
        if 2 in series:
            # top-order stress rate inherits the m=2 driven series
            surrogate = self.analyser.check_exponent(series[2], TOP_ORDER_TAU_TARGET,
                                                     float(self.config.fit['slope_tol_top']))
            surrogate.update(series='tau_top_order_surrogate', m=3)
            checks.append(surrogate)
        frame, verdict = self.analyser.summarise(checks)
        self.data_manager.save_table(frame, "driven_tau_fits", self.provenance)
        return verdict, {'c0': quadrature.c0, 'fits': frame.to_dict('records')}

    def _symbol_scan(self):
        scan = self.config.scan
        radii = default_radii(float(scan['r_max']), int(scan['radii']))
        result = scan_critical_radius(self.sp, self.params, radii,
                                      n_states=int(scan['states']), seed=self.config.seed)
        self.data_manager.save_table(result.table[SCAN_COLUMNS], "symbol_scan", self.provenance)
        self.data_manager.save_table(result.table, "symbol_scan_full", self.provenance)
        details = {
            'c1': result.c1, 'c2': result.c2, 'c0': result.c0,
            'kappa4': result.kappa4, 'kappa2': result.kappa2, 'certified': result.certified,
        }
        if not result.certified:
            return False, details

        options = self.config.options
        bound_radii = np.linspace(result.c0 / options['semigroup_radii'], result.c0,
                                  int(options['semigroup_radii']))
        bound_times = np.geomspace(1e-2, self.config.fit['t_max'], int(options['semigroup_times']))
        bounds = [fit_semigroup_bound(block, bound_radii, bound_times, self.sp, self.params,
                                      float(scan['c_cap'])) for block in (4, 2)]
        table = pd.DataFrame([vars(b) for b in bounds])
        self.data_manager.save_table(table, "semigroup_bounds", self.provenance)
        details['semigroup_bounds'] = table.to_dict('records')
        return bool(result.c0 > 0 and table['passed'].all()), details

    def _initial_state(self):
        data = self.config.data
        return random_initial_data(self.config.grid, self.config.seed,
                                   float(data['amplitude']), int(data['k_max']),
                                   tuple(data['means']), data['components'], self.config.threads)

    def _run_solver(self):
        """Reformulated trajectory (with the original-system oracle when enabled)"""
        solver_cfg = self.config.solver
        initial = self._initial_state()
        kwargs = dict(dt=float(solver_cfg['dt']), t_end=float(solver_cfg['t_end']),
                      cadence=int(solver_cfg['cadence']))
        try:
            if solver_cfg['oracle']:
                trajectory, _ = oracle_original_system(
                    self.params, self.config.grid, initial,
                    sources_enabled=bool(solver_cfg['sources_enabled']),
                    threads=self.config.threads, **kwargs)
            else:
                solver = ReformulatedSolver(self.params, self.config.grid,
                                            bool(solver_cfg['sources_enabled']),
                                            self.config.threads, cfl=float(solver_cfg['cfl']))
                trajectory = solver.simulate(initial, **kwargs)
        except BlowUpError as e:
            partial = getattr(e, 'trajectory', None)
            if partial is not None and partial.monitors:
                self.data_manager.save_table(partial.monitor_frame(), "simulate_monitors",
                                             self.provenance)
            if e.last_state is not None:
                path = self.data_manager.save_state(e.last_state, self.config.grid, 0,
                                                    prefix="last_valid")
                self.logger.error(f"Last valid state at t={e.last_state.t:g} saved to {path}")
            raise
        return initial, trajectory

    def _simulate(self):
        initial, trajectory = self._run_solver()
        monitors = trajectory.monitor_frame()
        self.data_manager.save_table(monitors, "simulate_monitors", self.provenance)
        for index, state in enumerate(trajectory.snapshots):
            self.data_manager.save_state(state, self.config.grid, index)
        self.logger.info(f"Saved {len(trajectory.snapshots)} snapshots")

        details = {
            'completed': trajectory.completed,
            'snapshots': len(trajectory.snapshots),
            'mean_drift_rho': float(monitors['mean_rho'].sub(monitors['mean_rho'].iloc[0]).abs().max()),
            'mean_drift_eta': float(monitors['mean_eta'].sub(monitors['mean_eta'].iloc[0]).abs().max()),
        }
        passed = trajectory.completed
        if 'equivalence_defect' in monitors:
            worst = float(monitors['equivalence_defect'].max())
            details['equivalence_defect'] = worst
            passed = passed and worst <= TOLERANCES['equivalence']

        mu_list = self.config.options['mu_list']
        if mu_list:
            table = vanishing_viscosity_experiment(
                self.params, self.config.grid, initial, mu_list,
                times=self.config.options['viscosity_times'],
                nu_over_mu=float(self.config.options['nu_over_mu']),
                dt=float(self.config.solver['dt']), threads=self.config.threads)
            self.data_manager.save_table(table, "vanishing_viscosity", self.provenance)
            decreasing = bool(table.groupby('t')['deviation']
                              .apply(lambda s: bool(np.all(np.diff(s.to_numpy()) < 0))).all())
            details['vanishing_viscosity_decreasing'] = decreasing
            passed = passed and decreasing
        return passed, details

    def _audit_trajectory(self):
        snapshots = self.config.data['snapshots']
        if snapshots is None:
            _, trajectory = self._run_solver()
            return trajectory.snapshots
        states = self.data_manager.load_trajectory(snapshots)
        if states[0].rho.shape != self.config.grid.shape:
            raise GridMismatchError(
                f"snapshots on {states[0].rho.shape} but config grid is {self.config.grid.shape}")
        return states

    def _energy_audit(self):
        audit = self.config.audit
        states = self._audit_trajectory()
        weights = FunctionalWeights.construct(self.sp, self.params, float(audit['c_gen']),
                                              float(audit['delta']),
                                              float(self.config.quadrature['c0']))
        weights.validate(self.sp, self.params)
        auditor = EnergyAuditor(self.params, self.config.grid, weights, self.config.threads)

        table = auditor.energy_table(states, float(audit['tol_diss']))
        self.data_manager.save_table(table[AUDIT_COLUMNS], "energy_audit", self.provenance)
        self.data_manager.save_table(table, "energy_audit_full", self.provenance)

        monotone = {}
        for level in (1, 2, 3):
            report = auditor.monotonicity_audit(states, level, float(audit['monotone_rel']),
                                                float(audit['monotone_abs']))
            monotone[f'H{level}'] = report.passed
        fits = [auditor.gronwall_form(level, states, float(self.config.scan['c_cap']))
                for level in (1, 2, 3)]
        gronwall = pd.DataFrame([vars(fit) for fit in fits])
        self.data_manager.save_table(gronwall, "gronwall_fits", self.provenance)

        flagged = int((table['flags'] != '').sum())
        details = {
            'weights': weights.to_dict(),
            'monotone': monotone,
            'flagged_rows': flagged,
            'gronwall': gronwall.to_dict('records'),
        }
        decaying = bool((gronwall.loc[gronwall['level'] == 1, 'C2'] > 0).all())
        passed = (all(monotone.values()) and flagged == 0 and bool(gronwall['feasible'].all())
                  and decaying)
        return passed, details

    def _check_lemmas(self):
        options = self.config.options
        ops = SpectralOps(self.config.grid, self.config.threads)
        c0 = min(1.0, float(self.config.quadrature['c0']))
        rng = np.random.default_rng(self.config.seed)

        rows = []
        for sample in range(int(options['bernstein_samples'])):
            f = rng.standard_normal(self.config.grid.shape)
            coeffs = ops.dealias(ops.fft(f))
            coeffs[0, 0, 0] = 0.0
            for m1, m2 in options['bernstein_pairs']:
                residual = ops.bernstein_check(ops.ifft(coeffs), int(m1), int(m2), c0)
                rows.append({'sample': sample, 'm1': m1, 'm2': m2, 'residual': residual})
        bernstein = pd.DataFrame(rows)
        self.data_manager.save_table(bernstein, "bernstein_check", self.provenance)
        bernstein_ok = bool((bernstein['residual'] >= -1e-10).all())
        self.logger.info(f"Bernstein check: min residual {bernstein['residual'].min():.3e}")

        convolution = {}
        frames = []
        for a, b in options['convolution_pairs']:
            table = self.analyser.convolution_decay_check(float(a), float(b),
                                                          options['convolution_times'])
            table.insert(0, 'b', b)
            table.insert(0, 'a', a)
            frames.append(table)
            bounded = self.analyser.ratio_bounded(table)
            if 'bound' in table:
                bounded = bounded and bool((table['integral'] <= table['bound'] * (1 + 1e-8)).all())
            convolution[f"{a}_{b}"] = bounded
        self.data_manager.save_table(pd.concat(frames, ignore_index=True),
                                     "convolution_check", self.provenance)

        details = {
            'bernstein_min_residual': float(bernstein['residual'].min()),
            'bernstein_passed': bernstein_ok,
            'convolution_bounded': convolution,
        }
        return bernstein_ok and all(convolution.values()), details


def format_value(value):
    if isinstance(value, float):
        return f"{value:.6g}" if math.isfinite(value) else str(value)
    return str(value)
