"""Decimal-text snapshots.

A field block is a header line ``# grid d n1 [n2] L1 [L2] tag time`` followed
by one value per line in flat node order, printed with 17 significant digits
so that reading it back is bit-exact.  A state snapshot is a ``theta`` block
followed by a ``chi`` block in one file.
"""

from __future__ import annotations

import numpy as np

from .errors import SnapshotError
from .grid import TAGS, DomainGrid
from .solver import SystemState


def _fmt(x):
    return format(float(x), ".17g")


def format_field(grid: DomainGrid, values, tag, t):
    values = np.asarray(values, dtype=float).ravel()
    lines = [f"# grid {grid.header()} {tag} {_fmt(t)}"]
    lines.extend(_fmt(v) for v in values)
    return "\n".join(lines) + "\n"


def write_field(path, grid, values, tag="other", t=0.0):
    with open(path, "w") as fh:
        fh.write(format_field(grid, values, tag, t))


def write_snapshot(state: SystemState, grid: DomainGrid, path):
    with open(path, "w") as fh:
        fh.write(format_field(grid, state.theta, "theta", state.t))
        fh.write(format_field(grid, state.chi, "chi", state.t))


def _parse_header(line, lineno, grid):
    tokens = line.split()
    if len(tokens) < 2 or tokens[0] != "#" or tokens[1] != "grid":
        raise SnapshotError("expected header '# grid d n1 [n2] L1 [L2] tag time'", lineno)
    try:
        d = int(tokens[2])
        if d not in (1, 2):
            raise ValueError
        expected = 3 + 2 * d + 2
        if len(tokens) != expected:
            raise ValueError
        nodes = tuple(int(x) for x in tokens[3:3 + d])
        lengths = tuple(float(x) for x in tokens[3 + d:3 + 2 * d])
        tag = tokens[3 + 2 * d]
        t = float(tokens[4 + 2 * d])
    except (ValueError, IndexError):
        raise SnapshotError(f"malformed grid header {line!r}", lineno) from None
    if tag not in TAGS:
        raise SnapshotError(f"unknown field tag {tag!r}", lineno)
    if grid is not None:
        same = (d == grid.dim and nodes == tuple(grid.nodes)
                and np.allclose(lengths, grid.lengths, rtol=1e-12, atol=0))
        if not same:
            raise SnapshotError(
                f"grid header ({d}, {nodes}, {lengths}) does not match the configured grid "
                f"({grid.dim}, {tuple(grid.nodes)}, {tuple(grid.lengths)})", lineno)
    return nodes, tag, t


def read_fields(path, grid=None):
    """Parse every field block in ``path``: list of ``(tag, t, values)``."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    blocks = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        nodes, tag, t = _parse_header(lines[i], i + 1, grid)
        n = int(np.prod(nodes))
        values = np.empty(n)
        for k in range(n):
            lineno = i + 2 + k
            if lineno - 1 >= len(lines):
                raise SnapshotError(f"expected {n} values for '{tag}', file ended", lineno)
            try:
                values[k] = float(lines[lineno - 1])
            except ValueError:
                raise SnapshotError(f"not a number: {lines[lineno - 1]!r}", lineno) from None
            if not np.isfinite(values[k]):
                raise SnapshotError(f"non-finite value at node {k}", lineno)
            if tag == "chi" and abs(values[k]) >= 1.0:
                raise SnapshotError(
                    f"order parameter |chi| >= 1 at node {k} (value {values[k]!r})", lineno)
        blocks.append((tag, t, values))
        i += 1 + n
    return blocks


def read_field(path, grid=None, tag=None):
    blocks = read_fields(path, grid)
    for btag, t, values in blocks:
        if tag is None or btag == tag:
            return values, t
    raise SnapshotError(f"{path}: no field tagged {tag!r}")


def read_snapshot(path, grid=None):
    """Inverse of :func:`write_snapshot`."""
    blocks = {tag: (t, v) for tag, t, v in read_fields(path, grid)}
    if "theta" not in blocks or "chi" not in blocks:
        raise SnapshotError(f"{path}: a state snapshot needs 'theta' and 'chi' blocks")
    t_theta, theta = blocks["theta"]
    t_chi, chi = blocks["chi"]
    if t_theta != t_chi:
        raise SnapshotError(f"{path}: theta and chi blocks disagree on time")
    return SystemState(theta, chi, t_chi)
