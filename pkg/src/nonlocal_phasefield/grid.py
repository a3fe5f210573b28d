"""Uniform interior-node grid on a box with homogeneous Dirichlet data.

Nodes sit at ``x = (i + 1) * h`` for ``i = 0..n-1`` along each axis, with
``h = L / (n + 1)``; the boundary values (zero) are never stored.  In 2D a
field is a flat array in C order of shape ``(n1, n2)``: node ``(i, j)`` has
flat index ``i * n2 + j``.  Every module uses this ordering.

All integrals use the uniform weight ``prod(h)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

TAGS = ("theta", "chi", "source", "kappa", "other")


@dataclass(frozen=True)
class DomainGrid:
    """Interior lattice of ``prod_i (0, L_i)``.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    lengths : tuple of float
        Side lengths ``L_i``.
    nodes : tuple of int
        Interior node counts ``n_i`` (at least 3 each).
    """

    dim: int
    lengths: tuple
    nodes: tuple
    spacing: tuple = field(init=False)

    def __post_init__(self):
        spacing = tuple(L / (n + 1) for L, n in zip(self.lengths, self.nodes))
        object.__setattr__(self, "spacing", spacing)
        # derived constants, cached outside the dataclass fields
        object.__setattr__(self, "_size", int(np.prod(self.nodes)))
        object.__setattr__(self, "_weight", float(np.prod(spacing)))

    @property
    def shape(self):
        return tuple(self.nodes)

    @property
    def size(self):
        return self._size

    @property
    def weight(self):
        """Quadrature weight of a single node, ``prod(h_i)``."""
        return self._weight

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def axes(self):
        """Node coordinates along each axis."""
        return [h * np.arange(1, n + 1) for h, n in zip(self.spacing, self.nodes)]

    def coordinates(self):
        """Array of shape ``(N, d)`` with node coordinates in flat order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def reshape(self, v):
        return np.asarray(v).reshape(self.shape)

    def check(self, v):
        """Return ``v`` as a flat float array, raising on a grid mismatch."""
        v = _values(v)
        if v.shape != (self.size,):
            raise ValueError(
                f"grid mismatch: field has shape {v.shape}, grid expects ({self.size},)"
            )
        return v

    # -- operators --------------------------------------------------------

    def apply_A(self, v):
        """Five/three-point stencil for ``-Laplace`` with zero ghost values."""
        u = self.reshape(self.check(v))
        out = np.zeros_like(u)
        for axis, h in enumerate(self.spacing):
            inv = 1.0 / h**2
            head = [slice(None)] * self.dim
            tail = [slice(None)] * self.dim
            head[axis] = slice(1, None)
            tail[axis] = slice(None, -1)
            out += (2.0 * inv) * u
            out[tuple(head)] -= inv * u[tuple(tail)]
            out[tuple(tail)] -= inv * u[tuple(head)]
        return out.ravel()

    def laplacian_matrix(self):
        """Sparse CSR matrix of the discrete ``A = -Laplace``."""
        mats = []
        for n, h in zip(self.nodes, self.spacing):
            mats.append(sps.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)) / h**2)
        if self.dim == 1:
            return sps.csr_matrix(mats[0])
        eye1 = sps.identity(self.nodes[0])
        eye2 = sps.identity(self.nodes[1])
        return sps.csr_matrix(sps.kron(mats[0], eye2) + sps.kron(eye1, mats[1]))

    def A_diagonal(self):
        return np.full(self.size, sum(2.0 / h**2 for h in self.spacing))

    def A_eigenvalues(self):
        """Exact spectrum of the discrete Dirichlet ``A`` (sorted ascending)."""
        per_axis = [
            (2.0 - 2.0 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))) / h**2
            for n, h in zip(self.nodes, self.spacing)
        ]
        if self.dim == 1:
            return np.sort(per_axis[0])
        return np.sort(np.add.outer(per_axis[0], per_axis[1]).ravel())

    @property
    def poincare_constant(self):
        """``C_P`` with ``||v||^2 <= C_P ||v||_V^2``, i.e. ``1 / mu_min(A)``."""
        return 1.0 / self.A_eigenvalues()[0]

    # -- quadrature -------------------------------------------------------

    def inner(self, u, v):
        return self.weight * float(np.dot(self.check(u), self.check(v)))

    def norm_L2(self, v):
        v = self.check(v)
        return float(np.sqrt(self.weight * np.dot(v, v)))

    def norm_V(self, v):
        v = self.check(v)
        return float(np.sqrt(max(self.inner(self.apply_A(v), v), 0.0)))

    def integral(self, v):
        return self.weight * float(np.sum(self.check(v)))

    def header(self):
        """Grid part of the snapshot header: ``d n1 [n2] L1 [L2]``."""
        parts = [str(self.dim)] + [str(n) for n in self.nodes]
        parts += [repr(float(L)) for L in self.lengths]
        return " ".join(parts)


def build_grid(d, lengths, node_counts):
    """Validated :class:`DomainGrid`; only ``d`` in {1, 2} is supported."""
    if d not in (1, 2):
        raise ValueError(f"unsupported dimension {d}: only d = 1 or 2 is implemented")
    lengths = tuple(float(L) for L in np.atleast_1d(lengths))
    node_counts = tuple(int(n) for n in np.atleast_1d(node_counts))
    if len(lengths) != d or len(node_counts) != d:
        raise ValueError(f"expected {d} lengths and node counts")
    if any(not np.isfinite(L) or L <= 0 for L in lengths):
        raise ValueError(f"side lengths must be positive, got {lengths}")
    if any(n < 3 for n in node_counts):
        raise ValueError(f"need at least 3 interior nodes per axis, got {node_counts}")
    return DomainGrid(d, lengths, node_counts)


@dataclass(frozen=True)
class ScalarField:
    """Grid function with a variable tag.

    Fields tagged ``chi`` must satisfy ``|value| < 1`` at every node; this is
    checked, never clamped.
    """

    grid: DomainGrid
    values: np.ndarray
    tag: str = "other"

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        values = np.array(self.values, dtype=float).ravel()
        if values.shape != (self.grid.size,):
            raise ValueError(
                f"field length {values.size} does not match grid size {self.grid.size}"
            )
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise ValueError(f"non-finite value at node {bad[0]}")
        if self.tag == "chi":
            bad = np.flatnonzero(np.abs(values) >= 1.0)
            if bad.size:
                raise ValueError(
                    f"order parameter reaches a pure state at node {bad[0]} "
                    f"(value {values[bad[0]]!r})"
                )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size


def _values(v):
    if isinstance(v, ScalarField):
        return v.values
    return np.asarray(v, dtype=float).ravel()
