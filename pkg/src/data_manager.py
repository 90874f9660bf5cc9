# src/data_manager.py
import json
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from config import OUTPUT_DIR
from src.errors import GridMismatchError, ParameterError
from src.logger import setup_logger
from src.solvers.field_state import N_COMPONENTS, FieldState

MAGIC = b'OBFD'
FORMAT_VERSION = 1
VALENCE_CODES = {'scalar': 0, 'vector': 1, 'tensor': 2, 'state': 3}
VALENCE_COUNTS = {'scalar': 1, 'vector': 3, 'tensor': 6, 'state': N_COMPONENTS}


def _header_dtype(endian):
    return np.dtype([
        ('magic', 'S4'),
        ('endian', 'S1'),
        ('version', 'u1'),
        ('valence', 'u1'),
        ('ncomp', 'u1'),
        ('dims', f'{endian}u4', (3,)),
        ('lengths', f'{endian}f8', (3,)),
        ('time', f'{endian}f8'),
    ])


HEADER_SIZE = _header_dtype('<').itemsize  # 52 bytes


class DataManager:
    """Owns the output directory: provenance-stamped CSV tables, JSON summaries, field snapshots"""

    def __init__(self, output_dir=None):
        self.timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        self.base_dir = Path(output_dir or OUTPUT_DIR)
        self.snapshot_dir = self.base_dir / "snapshots"
        self.logger = setup_logger("data_manager")

        self.base_dir.mkdir(parents=True, exist_ok=True)

    # tables

    def save_table(self, df, name, provenance=None):
        """CSV with a '#'-prefixed provenance header; no wall-clock data"""
        filename = self.base_dir / f"{name}.csv"
        with open(filename, 'w', encoding='utf-8', newline='') as f:
            for key, value in (provenance or {}).items():
                f.write(f"# {key} = {value}\n")
            df.to_csv(f, index=False)
        self.logger.info(f"Table saved: {filename}")
        return filename

    def load_table(self, filename):
        """(DataFrame, provenance dict of strings)"""
        provenance = {}
        with open(filename, 'r', encoding='utf-8') as f:
            for line in f:
                if not line.startswith('#'):
                    break
                key, _, value = line[1:].partition('=')
                provenance[key.strip()] = value.strip()
        df = pd.read_csv(filename, comment='#')
        return df, provenance

    def save_summary(self, summary, name="summary"):
        """JSON report; the only output carrying a timestamp"""
        filename = self.base_dir / f"{name}.json"
        document = {
            "timestamp": datetime.now().isoformat(),
            "run_timestamp": self.timestamp,
            **summary,
        }
        with open(filename, 'w', encoding='utf-8') as f:
            json.dump(document, f, indent=2, ensure_ascii=False, default=_json_default)
        self.logger.info(f"Summary saved: {filename}")
        return filename

    def load_summary(self, filename):
        with open(filename, 'r', encoding='utf-8') as f:
            return json.load(f)

    # binary snapshots

    def save_field(self, field, grid, t, filename, valence=None):
        """Write one field (or an 11-component state bundle) in the OBFD container"""
        field = np.asarray(field, dtype=float)
        if field.ndim == 3:
            field = field[None]
        valence = valence or {1: 'scalar', 3: 'vector', 6: 'tensor', N_COMPONENTS: 'state'}.get(field.shape[0])
        if valence not in VALENCE_CODES or field.shape[0] != VALENCE_COUNTS[valence]:
            raise GridMismatchError(f"cannot store {field.shape[0]} components as {valence}")
        if field.shape[1:] != grid.shape:
            raise GridMismatchError(f"field {field.shape[1:]} does not match grid {grid.shape}")

        header = np.zeros((), dtype=_header_dtype('<'))
        header['magic'] = MAGIC
        header['endian'] = b'<'
        header['version'] = FORMAT_VERSION
        header['valence'] = VALENCE_CODES[valence]
        header['ncomp'] = field.shape[0]
        header['dims'] = grid.shape
        header['lengths'] = (grid.length,) * 3
        header['time'] = t

        filename = Path(filename)
        filename.parent.mkdir(parents=True, exist_ok=True)
        with open(filename, 'wb') as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(field, dtype='<f8').tobytes())
        return filename

    def load_field(self, filename):
        """(array shaped (ncomp, n1, n2, n3), metadata dict)"""
        raw = Path(filename).read_bytes()
        if len(raw) < HEADER_SIZE or raw[:4] != MAGIC:
            raise ParameterError(f"{filename} is not an OBFD snapshot")
        endian = raw[4:5].decode('ascii')
        if endian not in '<>':
            raise ParameterError(f"{filename}: bad endianness tag {endian!r}")
        header = np.frombuffer(raw[:HEADER_SIZE], dtype=_header_dtype(endian))[0]
        if header['version'] != FORMAT_VERSION:
            raise ParameterError(f"{filename}: unsupported format version {header['version']}")
        codes = {code: name for name, code in VALENCE_CODES.items()}
        dims = tuple(int(d) for d in header['dims'])
        ncomp = int(header['ncomp'])
        payload = np.frombuffer(raw[HEADER_SIZE:], dtype=f'{endian}f8')
        if payload.size != ncomp * int(np.prod(dims)):
            raise GridMismatchError(f"{filename}: payload does not match header dimensions")
        meta = {
            'valence': codes.get(int(header['valence'])),
            'ncomp': ncomp,
            'dims': dims,
            'lengths': tuple(float(x) for x in header['lengths']),
            'time': float(header['time']),
        }
        return payload.reshape((ncomp,) + dims).astype(float), meta

    def save_state(self, state: FieldState, grid, index, prefix="snapshot"):
        filename = self.snapshot_dir / f"{prefix}_{index:06d}.obfd"
        return self.save_field(state.stacked(), grid, state.t, filename, valence='state')

    def load_state(self, filename) -> FieldState:
        array, meta = self.load_field(filename)
        if meta['valence'] != 'state':
            raise ParameterError(f"{filename} holds a {meta['valence']} field, not a state bundle")
        return FieldState.from_stacked(array, meta['time'])

    def load_trajectory(self, directory=None, prefix="snapshot"):
        """Snapshots of a directory in index order"""
        directory = Path(directory or self.snapshot_dir)
        files = sorted(directory.glob(f"{prefix}_*.obfd"))
        if not files:
            raise ParameterError(f"no snapshots found in {directory}")
        return [self.load_state(f) for f in files]

    def export_field_csv(self, field, grid, name, max_n=32):
        """Point-per-row CSV of a field on a small grid: x, y, z, c0, c1, ..."""
        if grid.n > max_n:
            raise ParameterError(f"CSV export is limited to grids up to {max_n}^3")
        field = np.asarray(field, dtype=float)
        if field.ndim == 3:
            field = field[None]
        x = grid.coordinates
        df = pd.DataFrame({axis: x[i].ravel() for i, axis in enumerate('xyz')})
        for c in range(field.shape[0]):
            df[f'c{c}'] = field[c].ravel()
        return self.save_table(df, name)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")
