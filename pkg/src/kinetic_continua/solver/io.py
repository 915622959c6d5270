"""CSV snapshots and diagnostics with ``#`` provenance headers."""

import csv

import numpy as np

from ..errors import ConfigError
from ..tensors import SYM_INDEX, sym_to_vec6, vec6_to_sym
from .state import FieldState

_SYM = ("11", "22", "33", "12", "13", "23")
SNAPSHOT_COLUMNS = (
    ["i", "j", "zeta1", "zeta2", "rho", "u1", "u2", "u3"]
    + [f"Y{c}" for c in _SYM]
    + [f"B{a}{b}" for a in "123" for b in "123"]
    + [f"H{c}" for c in _SYM]
    + ["eps"]
)


def fmt(x):
    return repr(float(x))


def header_lines(version, config_hash, seed, extra=()):
    lines = [f"kinetic-continua {version}", f"config_sha256 {config_hash}", f"seed {seed}"]
    return lines + list(extra)


def _write_header(handle, lines):
    for line in lines:
        handle.write(f"# {line}\n")


def write_snapshot(path, grid, state, header=()):
    z1, z2 = grid.mesh()
    Y6 = sym_to_vec6(state.Y)
    H6 = sym_to_vec6(state.H)
    B9 = state.B.reshape(state.B.shape[:2] + (9,))
    with open(path, "w", newline="") as handle:
        _write_header(handle, header)
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        n1, n2 = state.rho.shape
        for i in range(n1):
            for j in range(n2):
                row = [i, j, fmt(z1[i, j]), fmt(z2[i, j]), fmt(state.rho[i, j])]
                row += [fmt(x) for x in state.u[i, j]]
                row += [fmt(x) for x in Y6[i, j]]
                row += [fmt(x) for x in B9[i, j]]
                row += [fmt(x) for x in H6[i, j]]
                row.append("" if state.eps is None else fmt(state.eps[i, j]))
                w.writerow(row)


def _data_rows(path):
    with open(path, newline="") as handle:
        lines = [ln for ln in handle if not ln.startswith("#")]
    return list(csv.reader(lines))


def read_snapshot(path):
    """Read a snapshot CSV; returns ``(state, zeta1, zeta2)`` as nodal arrays."""
    rows = _data_rows(path)
    if not rows or rows[0] != SNAPSHOT_COLUMNS:
        raise ConfigError(f"{path}: not a snapshot file (unexpected header)", key="initial.path")
    body = rows[1:]
    if not body:
        raise ConfigError(f"{path}: snapshot has no rows", key="initial.path")
    ij = np.array([[int(r[0]), int(r[1])] for r in body])
    n1, n2 = ij.max(axis=0) + 1
    if len(body) != n1 * n2:
        raise ConfigError(f"{path}: expected {n1 * n2} rows, found {len(body)}", key="initial.path")
    has_eps = all(r[-1] != "" for r in body)
    vals = np.array([[float(x) for x in r[2:-1]] + [float(r[-1]) if has_eps else 0.0] for r in body])
    grid_vals = np.empty((n1, n2, vals.shape[1]))
    grid_vals[ij[:, 0], ij[:, 1]] = vals
    col = {name: k - 2 for k, name in enumerate(SNAPSHOT_COLUMNS)}
    get = lambda names: grid_vals[..., [col[n] for n in names]]
    state = FieldState(
        rho=grid_vals[..., col["rho"]],
        u=get(["u1", "u2", "u3"]),
        Y=vec6_to_sym(get([f"Y{c}" for c in _SYM])),
        B=get([f"B{a}{b}" for a in "123" for b in "123"]).reshape(n1, n2, 3, 3),
        H=vec6_to_sym(get([f"H{c}" for c in _SYM])),
        eps=grid_vals[..., col["eps"]] if has_eps else None,
    )
    return state, grid_vals[..., col["zeta1"]], grid_vals[..., col["zeta2"]]


def write_diagnostics(path, times, records, header=()):
    keys = list(records[0].keys()) if records else []
    with open(path, "w", newline="") as handle:
        _write_header(handle, header)
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["tau"] + keys)
        for t, rec in zip(times, records):
            w.writerow([fmt(t)] + [fmt(rec[k]) for k in keys])


def read_table(path):
    """Generic numeric CSV reader: returns ``(columns, array)``, skipping ``#`` lines."""
    rows = _data_rows(path)
    cols = rows[0]
    data = np.array([[float(x) if x != "" else np.nan for x in r] for r in rows[1:]])
    return cols, data


__all__ = [
    "SNAPSHOT_COLUMNS",
    "SYM_INDEX",
    "header_lines",
    "read_snapshot",
    "read_table",
    "write_diagnostics",
    "write_snapshot",
]
