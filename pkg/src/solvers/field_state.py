# src/solvers/field_state.py
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

RHO = 0
U = slice(1, 4)
ETA = 4
TAU = slice(5, 11)
N_COMPONENTS = 11


@dataclass
class FieldState:
    """Perturbation fields (rho', u, eta', tau) of the reformulated system at time t"""
    rho: np.ndarray
    u: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    t: float = 0.0

    def stacked(self):
        return np.concatenate([self.rho[None], self.u, self.eta[None], self.tau])

    @classmethod
    def from_stacked(cls, array, t=0.0):
        return cls(array[RHO].copy(), array[U].copy(), array[ETA].copy(), array[TAU].copy(), t)

    @classmethod
    def zeros(cls, grid, t=0.0):
        return cls.from_stacked(np.zeros((N_COMPONENTS,) + grid.shape), t)


@dataclass
class OriginalFieldState:
    """(rho', U, eta', T) of the original system; T is the total stress"""
    rho: np.ndarray
    velocity: np.ndarray
    eta: np.ndarray
    T: np.ndarray
    t: float = 0.0

    def stacked(self):
        return np.concatenate([self.rho[None], self.velocity, self.eta[None], self.T])

    @classmethod
    def from_stacked(cls, array, t=0.0):
        return cls(array[RHO].copy(), array[U].copy(), array[ETA].copy(), array[TAU].copy(), t)


@dataclass
class SourceTerms:
    S1: np.ndarray
    S2: np.ndarray
    S3: np.ndarray
    S4: np.ndarray

    def stacked(self):
        return np.concatenate([self.S1[None], self.S2, self.S3[None], self.S4])


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    monitors: list = field(default_factory=list)
    completed: bool = False

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    def monitor_frame(self):
        return pd.DataFrame(self.monitors)

    @property
    def last(self):
        return self.snapshots[-1] if self.snapshots else None
