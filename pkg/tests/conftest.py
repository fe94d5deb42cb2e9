import csv

import numpy as np


def read_csv(path):
    """Read one of the package's CSV outputs into {column: array}.

    Skips '#' comment lines (the version stamp); numeric columns become
    float arrays, everything else stays as string arrays.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    header, body = rows[0], rows[1:]
    out = {}
    for k, name in enumerate(header):
        col = [r[k] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out
