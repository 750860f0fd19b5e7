"""Tensor-product indicator basis for highly adaptive lasso regressions.

Each basis function is I(x_s >= knot_s for every s in a coordinate subset),
with knots placed at observed data rows. The number of distinct functions is
bounded by n * (2^p - 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np


@dataclass(frozen=True)
class BasisFunction:
    """One indicator function I(x[c] >= k for c, k in zip(coords, knots)).

    coords are 0-based column indices, strictly increasing; knots align with
    coords.
    """
    coords: tuple[int, ...]
    knots: tuple[float, ...]

    def __post_init__(self):
        if len(self.coords) == 0:
            raise ValueError("basis function needs at least one coordinate")
        if len(self.coords) != len(self.knots):
            raise ValueError("coords and knots must have equal length")
        if any(b <= a for a, b in zip(self.coords, self.coords[1:])):
            raise ValueError("coords must be strictly increasing")
        if not np.isfinite(self.knots).all():
            raise ValueError("knots must be finite")


@dataclass(frozen=True)
class HalBasis:
    """Deduplicated, deterministically ordered collection of basis functions.

    Attributes:
        functions: basis functions ordered by (coords, knots).
        source_n: number of rows in the knot-generating matrix.
        n_dim: number of columns of the knot-generating matrix.
        max_degree: largest coordinate-subset size enumerated.
    """
    functions: tuple[BasisFunction, ...]
    source_n: int
    n_dim: int
    max_degree: int

    def __len__(self) -> int:
        return len(self.functions)


def _thin_values(col: np.ndarray, max_knots: int) -> np.ndarray:
    """Reduce a column's candidate knot values to empirical quantiles.

    method='lower' keeps retained values inside the observed set, so knot
    self-evaluation still holds after thinning.
    """
    vals = np.unique(col)
    if max_knots == 0 or vals.size <= max_knots:
        return vals
    qs = np.linspace(0.0, 1.0, max_knots)
    return np.unique(np.quantile(vals, qs, method="lower"))


def enumerate_basis(x, max_degree: int | None = None,
                    max_knots_per_dim: int | None = None) -> HalBasis:
    """Enumerate indicator basis functions with knots at observed rows.

    For every non-empty coordinate subset S with |S| <= max_degree, one
    candidate function per distinct observed knot row of x[:, S]. Columns that
    are constant on x are dropped; duplicate columns are collapsed, keeping
    the lexicographically smallest (coords, knots) representative.

    Args:
        x: knot-generating matrix, shape (n, p).
        max_degree: largest subset size; default min(p, 3).
        max_knots_per_dim: 0 keeps every observed value; k >= 2 snaps each
            dimension onto k empirical quantiles before forming knot rows.
            Default 0 for n <= 500 and 50 above.

    Returns:
        HalBasis with at most n * (2^p - 1) functions.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise ValueError("knot matrix must be 2-dimensional and non-empty")
    n, p = x.shape
    if max_degree is None:
        max_degree = min(p, 3)
    if not 1 <= max_degree <= p:
        raise ValueError(f"max_degree must be in [1, {p}]")
    if max_knots_per_dim is None:
        max_knots_per_dim = 0 if n <= 500 else 50
    if max_knots_per_dim != 0 and max_knots_per_dim < 2:
        raise ValueError("max_knots_per_dim must be 0 or >= 2")

    # snap each dimension onto its retained value set (identity if untouched)
    xs = x.copy()
    if max_knots_per_dim:
        for j in range(p):
            vals = _thin_values(x[:, j], max_knots_per_dim)
            idx = np.searchsorted(vals, xs[:, j], side="right") - 1
            xs[:, j] = vals[np.clip(idx, 0, vals.size - 1)]

    subsets = sorted(
        s for d in range(1, max_degree + 1) for s in combinations(range(p), d))
    functions: list[BasisFunction] = []
    seen: set[bytes] = set()
    for S in subsets:
        knot_rows = np.unique(xs[:, S], axis=0)
        # (n, m) evaluation of every candidate column against the raw data
        cols = np.all(x[:, None, S] >= knot_rows[None, :, :], axis=2)
        counts = cols.sum(axis=0)
        for k in range(knot_rows.shape[0]):
            if counts[k] == 0 or counts[k] == n:
                continue
            key = np.packbits(cols[:, k]).tobytes()
            if key in seen:
                continue
            seen.add(key)
            functions.append(BasisFunction(S, tuple(knot_rows[k])))
    return HalBasis(tuple(functions), source_n=n, n_dim=p,
                    max_degree=max_degree)


def design_matrix(basis: HalBasis, x) -> np.ndarray:
    """Evaluate every basis function at the rows of x.

    Args:
        basis: enumerated basis.
        x: matrix with basis.n_dim columns.

    Returns:
        Fortran-ordered float64 matrix of 0/1 entries, shape (n, len(basis)).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != basis.n_dim:
        raise ValueError(
            f"x must have {basis.n_dim} columns, got shape {x.shape}")
    n = x.shape[0]
    out = np.zeros((n, len(basis.functions)), dtype=np.float64, order="F")
    # group by coordinate subset so each group evaluates in one broadcast
    by_coords: dict[tuple[int, ...], list[int]] = {}
    for j, f in enumerate(basis.functions):
        by_coords.setdefault(f.coords, []).append(j)
    for coords, idx in by_coords.items():
        knots = np.asarray([basis.functions[j].knots for j in idx])
        vals = np.all(x[:, None, coords] >= knots[None, :, :], axis=2)
        out[:, idx] = vals
    return out
