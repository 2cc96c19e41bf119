"""
Trajectory CSV emission and reading

Values are written with 17 significant digits so a re-read reproduces
every float exactly; the header row carries the column names.
"""
import os

import numpy as np

FLOAT_FORMAT = '%.17g'


def write_trajectory(path, trajectory):
    """
    Write a Trajectory as CSV

    Args:
        path: Output file path (parent directories are created)
        trajectory: Trajectory from integrate_closed_loop

    Returns:
        The path written
    """
    names = trajectory.column_names
    data = np.column_stack([trajectory[name] for name in names]) if len(trajectory) else \
        np.empty((0, len(names)))
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=',',
               header=','.join(names), comments='')
    return path


def read_trajectory(path):
    """
    Read a trajectory CSV back into named columns

    Returns:
        dict mapping column name to a float array
    """
    table = np.genfromtxt(path, delimiter=',', names=True, dtype=float)
    table = np.atleast_1d(table)
    return {name: np.asarray(table[name], dtype=float) for name in table.dtype.names}


def write_table(path, header, rows):
    """Write a small summary table (mixed text and numbers) as CSV"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    formatted = [[_cell(value) for value in row] for row in rows]
    np.savetxt(path, np.array(formatted, dtype=str).reshape(len(formatted), len(header)),
               fmt='%s', delimiter=',', header=','.join(header), comments='')
    return path


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    return str(value)
