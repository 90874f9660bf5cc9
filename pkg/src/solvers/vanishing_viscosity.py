# src/solvers/vanishing_viscosity.py
import math

import numpy as np
import pandas as pd

from config import SOLVER_CONFIG, VISCOSITY_CONFIG
from src.errors import ParameterError
from src.logger import setup_logger
from src.solvers.base_solver import step_count
from src.solvers.reformulated_solver import ReformulatedSolver

logger = setup_logger("vanishing_viscosity")


def _states_at(params, grid, initial, dt, times, threads):
    solver = ReformulatedSolver(params, grid, threads=threads)
    wanted = {round(t / dt): t for t in times}
    captured = {}

    def capture(state):
        index = round((state.t - initial.t) / dt)
        if index in wanted:
            captured[wanted[index]] = state.stacked()

    solver.simulate(initial, dt=dt, t_end=max(times), cadence=1,
                    on_snapshot=capture, keep_snapshots=False)
    return captured


def vanishing_viscosity_experiment(params, grid, initial, mu_list, times=(1.0,),
                                   dt=SOLVER_CONFIG['dt'], threads=1,
                                   nu_over_mu=VISCOSITY_CONFIG['nu_over_mu']):
    """||U^mu - U^0||_{L2} at fixed times for each viscosity, largest mu first.

    Each viscous run uses nu = nu_over_mu * mu, so both coefficients vanish together.

    `ratio` is the deviation over the previous row's deviation, `order` the
    observed power of mu between consecutive rows.
    """
    mu_list = sorted((float(mu) for mu in mu_list), reverse=True)
    if not mu_list or mu_list[-1] < 0:
        raise ParameterError("viscosities must be nonnegative")
    if not math.isfinite(nu_over_mu) or 2.0 + 3.0 * nu_over_mu < 0:
        raise ParameterError(f"nu_over_mu={nu_over_mu} breaks 2 mu + 3 nu >= 0")
    times = sorted(float(t) for t in times)
    for t in times:
        step_count(dt, t)

    inviscid = params.replace(mu=0.0, nu=0.0)
    logger.info(f"Reference inviscid run to t={times[-1]:g}")
    reference = _states_at(inviscid, grid, initial, dt, times, threads)

    rows = []
    for mu in mu_list:
        logger.info(f"Viscous run with mu={mu:g}, nu={nu_over_mu * mu:g}")
        viscous = params.replace(mu=mu, nu=nu_over_mu * mu)
        states = _states_at(viscous, grid, initial, dt, times, threads)
        for t in times:
            gap = states[t] - reference[t]
            deviation = math.sqrt(grid.volume * float(np.sum(gap ** 2)) / gap[0].size)
            rows.append({'mu': mu, 't': t, 'deviation': deviation})

    table = pd.DataFrame(rows).sort_values(['t', 'mu'], ascending=[True, False], ignore_index=True)
    table['ratio'] = table.groupby('t')['deviation'].transform(lambda s: s / s.shift(1))
    mu_ratio = table.groupby('t')['mu'].transform(lambda s: s / s.shift(1))
    resolved = (table['ratio'] > 0) & (mu_ratio > 0)
    table['order'] = np.nan
    table.loc[resolved, 'order'] = np.log(table.loc[resolved, 'ratio']) / np.log(mu_ratio[resolved])
    return table
