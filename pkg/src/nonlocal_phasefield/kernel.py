"""Discrete convolution operator ``J[v](x) = int k(x - y) v(y) dy``.

The kernel is sampled on the offset lattice ``{x_i - x_j}`` and every sum
uses the single node weight ``prod(h)``, so the dense matrix
``J_ij = k(x_i - x_j) prod(h)`` is exactly symmetric.  ``J`` is applied
either by a dense matrix product or by a zero-padded FFT convolution whose
length is at least ``2 n - 1`` per axis (no periodic wrap-around).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from .grid import DomainGrid, ScalarField

FAMILIES = ("gaussian", "mollifier", "table")
STRATEGIES = ("fft", "direct")
DEFAULT_EIG_CAP = 4096


@dataclass(frozen=True)
class KernelSpec:
    """Radial (hence even) interaction kernel.

    * ``gaussian``: ``a * exp(-|x|^2 / (2 w^2))``
    * ``mollifier``: ``a * exp(1 - 1 / (1 - (|x|/r0)^2))`` for ``|x| < r0``, else 0
    * ``table``: piecewise-linear interpolation of a radial profile
      ``(offsets, values)``; it must cover every offset that occurs on the grid.
    """

    family: str = "gaussian"
    amplitude: float = 1.0
    width: float = 0.1
    radius: float = 0.25
    table: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not np.isfinite(self.amplitude):
            raise ValueError("kernel amplitude must be finite")
        if self.family == "gaussian" and not self.width > 0:
            raise ValueError("gaussian kernel width must be positive")
        if self.family == "mollifier" and not self.radius > 0:
            raise ValueError("mollifier radius must be positive")
        if self.family == "table":
            if self.table is None:
                raise ValueError("table kernel needs sampled (offset, value) data")
            r, k = (np.asarray(a, dtype=float) for a in self.table)
            if r.shape != k.shape or r.ndim != 1 or r.size < 2:
                raise ValueError("kernel table must be two columns of equal length >= 2")
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(k))):
                raise ValueError("kernel table contains non-finite entries")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise ValueError("kernel table offsets must be >= 0 and strictly increasing")

    def profile(self, r):
        """Kernel value as a function of the distance ``r = |x|``."""
        r = np.abs(np.asarray(r, dtype=float))
        if self.family == "gaussian":
            return self.amplitude * np.exp(-0.5 * (r / self.width) ** 2)
        if self.family == "mollifier":
            s = r / self.radius
            out = np.zeros_like(r)
            inside = s < 1.0
            out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
            return out
        offsets, values = (np.asarray(a, dtype=float) for a in self.table)
        if np.any(r > offsets[-1] * (1 + 1e-12)):
            raise ValueError(
                f"kernel table covers |x| <= {offsets[-1]}, grid needs {r.max()}"
            )
        return np.interp(r, offsets, values)

    def __call__(self, x):
        """Evaluate at offset vectors ``x`` of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        return self.profile(np.sqrt(np.sum(x * x, axis=-1)))


def read_kernel_table(path):
    """Two-column ``offset value`` text file -> radial table.

    Negative offsets are allowed only if they mirror a positive one with the
    same value (evenness); they are then dropped.
    """
    data = np.loadtxt(Path(path), comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, found {data.shape[1]}")
    offsets, values = data[:, 0], data[:, 1]
    lookup = dict(zip(offsets.tolist(), values.tolist()))
    for o, v in lookup.items():
        if o < 0:
            if -o not in lookup or lookup[-o] != v:
                raise ValueError(f"{path}: kernel table is not even at offset {o}")
    keep = offsets >= 0
    order = np.argsort(offsets[keep])
    return tuple(offsets[keep][order]), tuple(values[keep][order])


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs of the discrete ``J`` sorted by decreasing ``|mu|``.

    ``vectors[:, i]`` are orthonormal in the weighted inner product.
    """

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray


class NonlocalOperator:
    """Discretized ``J`` together with ``kappa``, ``k0`` and ``k1``.

    Treat instances as immutable; :meth:`apply` is reentrant.
    """

    def __init__(self, spec: KernelSpec, grid: DomainGrid, strategy="fft",
                 eig_cap=DEFAULT_EIG_CAP):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
        self.spec = spec
        self.grid = grid
        self.strategy = strategy
        self.eig_cap = int(eig_cap)
        self.weight = grid.weight

        # table[m1 + n1 - 1, m2 + n2 - 1] = k(m1 h1, m2 h2)
        axes = [h * np.arange(-(n - 1), n) for n, h in zip(grid.nodes, grid.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.table = spec(np.stack(mesh, axis=-1))
        if not np.all(np.isfinite(self.table)):
            raise ValueError("kernel is not finite on the offset range")
        self.nonnegative = bool(np.all(self.table >= 0))

        self._fft_shape = tuple(scipy.fft.next_fast_len(2 * n - 1, real=True) for n in grid.nodes)
        self._table_hat = scipy.fft.rfftn(self.table, s=self._fft_shape)
        self._abs_hat = self._table_hat if self.nonnegative else scipy.fft.rfftn(
            np.abs(self.table), s=self._fft_shape)

        self.kappa = self.apply(np.ones(grid.size))
        self.kappa.setflags(write=False)
        row_abs = self.kappa if self.nonnegative else self._convolve(
            np.ones(grid.size), self._abs_hat)
        self.k1 = float(np.max(row_abs))
        self.k0 = float(self.weight * np.sum(row_abs))

    @property
    def kappa_min(self):
        return float(np.min(self.kappa))

    @property
    def kappa_max(self):
        return float(np.max(self.kappa))

    # -- application --------------------------------------------------------

    def apply(self, v, strategy=None):
        """Discrete convolution ``J[v]`` as a flat array."""
        v = self.grid.check(v)
        strategy = strategy or self.strategy
        if strategy == "direct":
            return self.matrix @ v
        if strategy != "fft":
            raise ValueError(f"unknown strategy {strategy!r}")
        return self._convolve(v, self._table_hat)

    def _convolve(self, v, table_hat):
        u = self.grid.reshape(v)
        full = scipy.fft.irfftn(scipy.fft.rfftn(u, s=self._fft_shape) * table_hat,
                                s=self._fft_shape)
        window = tuple(slice(n - 1, 2 * n - 1) for n in self.grid.nodes)
        return self.weight * full[window].ravel()

    @cached_property
    def matrix(self):
        """Dense ``N x N`` matrix ``k(x_i - x_j) * prod(h)`` (built on demand)."""
        grid = self.grid
        idx = np.indices(grid.shape).reshape(grid.dim, -1)
        offsets = []
        for axis, n in enumerate(grid.nodes):
            offsets.append(idx[axis][:, None] - idx[axis][None, :] + n - 1)
        return self.weight * self.table[tuple(offsets)]

    # -- spectral data ------------------------------------------------------

    @cached_property
    def spectrum(self) -> Spectrum:
        return eigendecompose(self)

    def dump_spectrum(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "eigenvalue"])
            for i, mu in enumerate(self.spectrum.values):
                writer.writerow([i, repr(float(mu))])


def kappa_field(spec, grid, strategy="fft"):
    """``kappa(x_i) = sum_j k(x_i - x_j) prod(h)`` as a tagged field.

    Returns ``(field, kappa_min, kappa_max)``.
    """
    op = NonlocalOperator(spec, grid, strategy=strategy)
    return ScalarField(grid, op.kappa, "kappa"), op.kappa_min, op.kappa_max


def kernel_bounds(spec, grid):
    """Discrete ``(k0, k1)``: double and row sums of ``|k|``."""
    op = NonlocalOperator(spec, grid)
    return op.k0, op.k1


def apply_J(op, v):
    return op.apply(v)


def eigendecompose(op: NonlocalOperator, tol=1e-8) -> Spectrum:
    """Full symmetric eigendecomposition of the dense ``J``."""
    n = op.grid.size
    if n > op.eig_cap:
        raise ValueError(
            f"grid has {n} nodes, above the dense eigendecomposition cap "
            f"{op.eig_cap}; use a smaller grid"
        )
    mat = op.matrix
    mu, q = np.linalg.eigh(0.5 * (mat + mat.T))
    order = np.argsort(-np.abs(mu), kind="stable")
    mu = mu[order]
    vectors = q[:, order] / np.sqrt(op.weight)
    resid = np.linalg.norm(mat @ vectors - vectors * mu, axis=0)
    norms = np.linalg.norm(vectors, axis=0)
    scale = max(1.0, float(np.max(np.abs(mu)))) if n else 1.0
    if np.any(resid > tol * norms * scale):
        raise RuntimeError(f"eigen-residual {resid.max():.3e} exceeds tolerance")
    return Spectrum(mu, vectors, resid / norms)


@dataclass(frozen=True)
class Projector:
    """Orthogonal projection onto the dominant eigenfields of ``J``.

    Modes with ``mu^2 > threshold`` are kept, ``threshold = lambda0 / (4 c)``.
    For every ``v``::

        ||J v||^2 <= threshold ||v||^2 + gain ||P v||^2

    with ``gain = max(1, max kept mu^2)``; ``gain`` is 1 whenever ``|mu_1| <= 1``.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray
    weight: float
    threshold: float
    lambda0: float = float("nan")
    c_lambda0: float = float("nan")

    @property
    def rank(self):
        return int(self.basis.shape[1])

    @property
    def gain(self):
        if self.rank == 0:
            return 1.0
        return max(1.0, float(np.max(self.eigenvalues**2)))

    def coefficients(self, v):
        return self.weight * (self.basis.T @ np.asarray(v, dtype=float))

    def apply(self, v):
        return self.basis @ self.coefficients(v)

    def norm(self, v):
        return float(np.linalg.norm(self.coefficients(v)))

    def slack(self, op, v):
        """``threshold ||v||^2 + gain ||P v||^2 - ||J v||^2`` (nonnegative)."""
        g = op.grid
        jv = op.apply(v)
        return (self.threshold * g.norm_L2(v) ** 2 + self.gain * self.norm(v) ** 2
                - g.norm_L2(jv) ** 2)


def build_projector(op: NonlocalOperator, lambda0, c_lambda0=1.0) -> Projector:
    if not lambda0 > 0:
        raise ValueError(
            f"assumption (Wconv) violated: lambda0 = {lambda0} must be positive"
        )
    if not c_lambda0 > 0:
        raise ValueError("c_lambda0 must be positive")
    spec = op.spectrum
    threshold = lambda0 / (4.0 * c_lambda0)
    keep = spec.values**2 > threshold
    return Projector(spec.values[keep], spec.vectors[:, keep], op.weight, threshold,
                     float(lambda0), float(c_lambda0))


def full_projector(op: NonlocalOperator) -> Projector:
    """Identity written in the eigenbasis (rank ``N``)."""
    spec = op.spectrum
    return Projector(spec.values, spec.vectors, op.weight, 0.0)


def lambda0(op: NonlocalOperator, potential):
    """``min kappa - lambda``; a nonpositive value is reported, not raised."""
    return op.kappa_min - potential.lam
