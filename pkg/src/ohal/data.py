"""Dataset loading, validation, and outcome scaling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Invalid input data or file schema."""


@dataclass(frozen=True)
class OutcomeScaling:
    """Affine map applied to the raw outcome: y_scaled = (y - y_min) / range.

    Identity scaling is recorded as (0, 1).
    """
    y_min: float
    y_max: float

    @property
    def range(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class Dataset:
    """Observational data unit (W, A, Y) with Y already on the unit interval.

    Attributes:
        w: covariate matrix, shape (n, p).
        a: binary treatment indicator, shape (n,).
        y: outcome in [0, 1], shape (n,).
        column_names: covariate names, length p.
    """
    w: np.ndarray
    a: np.ndarray
    y: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.w, dtype=np.float64))
        a = np.asarray(self.a, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if w.ndim != 2:
            raise DataError("covariate matrix must be 2-dimensional")
        n, p = w.shape
        if n < 2:
            raise DataError("need at least 2 observations")
        if p < 1:
            raise DataError("need at least 1 covariate column")
        if a.shape != (n,) or y.shape != (n,):
            raise DataError("treatment/outcome length must match covariate rows")
        if not (np.isfinite(w).all() and np.isfinite(a).all()
                and np.isfinite(y).all()):
            raise DataError("missing or non-finite values are not supported")
        if not np.all((a == 0) | (a == 1)):
            raise DataError("treatment must be binary 0/1")
        if a.sum() < 1 or (1 - a).sum() < 1:
            raise DataError("both treatment arms must be non-empty")
        if y.min() < 0 or y.max() > 1:
            raise DataError("outcome must lie in [0, 1] after scaling")
        names = tuple(self.column_names) if self.column_names else tuple(
            f"w{j + 1}" for j in range(p))
        if len(names) != p:
            raise DataError("column_names length must match covariate columns")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def p(self) -> int:
        return self.w.shape[1]

    def relabel_treatment(self) -> "Dataset":
        """Swap the treatment coding (A -> 1 - A)."""
        return Dataset(self.w, 1.0 - self.a, self.y, self.column_names)


def scale_outcome(y_raw, scale: bool = True) -> tuple[np.ndarray, OutcomeScaling]:
    """Min-max scale a raw outcome vector to [0, 1].

    With scale=False the outcome is taken as-is and must already be in [0, 1];
    the identity scaling (0, 1) is recorded.
    """
    y_raw = np.asarray(y_raw, dtype=np.float64)
    if not scale:
        if y_raw.min() < 0 or y_raw.max() > 1:
            raise DataError("outcome outside [0, 1]; re-run without --no-scale")
        return y_raw.copy(), OutcomeScaling(0.0, 1.0)
    y_min = float(y_raw.min())
    y_max = float(y_raw.max())
    if y_max == y_min:
        raise DataError("outcome is constant; effect is degenerate")
    return (y_raw - y_min) / (y_max - y_min), OutcomeScaling(y_min, y_max)


def unscale_effect(psi_scaled: float, s: OutcomeScaling) -> float:
    """Map an effect from the scaled outcome back to the original scale.

    The ATE is a difference, so only the range matters.
    """
    return psi_scaled * s.range


def load_csv(path, treatment_col: str, outcome_col: str,
             scale: bool = True) -> tuple[Dataset, OutcomeScaling]:
    """Load a dataset from a headered CSV file.

    All columns other than the treatment and outcome become covariates, in
    header order. The outcome is min-max scaled to [0, 1] unless scale=False.

    Args:
        path: CSV file with a header row, '.' decimal separator, UTF-8.
        treatment_col: name of the binary treatment column.
        outcome_col: name of the outcome column.
        scale: apply min-max outcome scaling (default True).

    Returns:
        (Dataset, OutcomeScaling)

    Raises:
        DataError: on schema problems, non-numeric cells (with row index),
            non-binary treatment values, or a constant outcome.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if treatment_col not in header:
            raise DataError(f"treatment column {treatment_col!r} not in header")
        if outcome_col not in header:
            raise DataError(f"outcome column {outcome_col!r} not in header")
        if treatment_col == outcome_col:
            raise DataError("treatment and outcome columns must differ")
        a_idx = header.index(treatment_col)
        y_idx = header.index(outcome_col)
        w_idx = [j for j in range(len(header)) if j not in (a_idx, y_idx)]
        if not w_idx:
            raise DataError("no covariate columns present")
        rows = []
        for i, rec in enumerate(reader, start=1):
            if len(rec) != len(header):
                raise DataError(f"row {i}: expected {len(header)} cells, "
                                f"got {len(rec)}")
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                raise DataError(f"row {i}: non-numeric cell") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=np.float64)
    a = mat[:, a_idx]
    bad = np.flatnonzero((a != 0) & (a != 1))
    if bad.size:
        raise DataError(f"row {bad[0] + 1}: treatment value {a[bad[0]]!r} "
                        "is not 0/1")
    y, scaling = scale_outcome(mat[:, y_idx], scale=scale)
    names = tuple(header[j] for j in w_idx)
    return Dataset(mat[:, w_idx], a, y, names), scaling
