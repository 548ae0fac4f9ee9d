"""Plant MAR/MCAR missingness into a complete dataset.

A cell in a planted column goes missing with probability
``1 - sigmoid(alpha * sum of its standardized predictor columns + intercept)``,
where the per-column intercept is calibrated by bisection so the expected
missing rate hits a target. ``alpha = 0`` reduces exactly to MCAR at the
target rate.

Predictor columns are standardized before the score is computed so that a
given ``alpha`` means the same shift strength on any dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import DataMatrix, MaskMatrix, MaskedDataset, standardize_values

__all__ = [
    "MarSpec",
    "CalibratedMechanism",
    "sigmoid",
    "calibrate_intercept",
    "apply_mar_mask",
    "select_random_spec",
]

PROB_FLOOR = 1e-12  # observation probabilities are kept strictly inside (0, 1)
MAX_MISSING_COLS = 4
MAX_PREDICTORS = 4


@dataclass(frozen=True)
class MarSpec:
    """Which columns go missing, what drives them, and how strongly.

    ``predictor_sets[k]`` lists the fully observed columns whose (standardized)
    sum drives missingness in ``missing_cols[k]``. Predictor sets must be
    disjoint from the missing columns so predictors stay fully observed.
    """

    missing_cols: tuple[int, ...]
    predictor_sets: tuple[tuple[int, ...], ...]
    alpha: float
    target_missing_rate: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "missing_cols", tuple(int(c) for c in self.missing_cols))
        object.__setattr__(
            self,
            "predictor_sets",
            tuple(tuple(int(c) for c in s) for s in self.predictor_sets),
        )
        if not self.missing_cols:
            raise ValueError("missing_cols is empty")
        if len(self.missing_cols) != len(set(self.missing_cols)):
            raise ValueError("duplicate missing columns")
        if len(self.predictor_sets) != len(self.missing_cols):
            raise ValueError("one predictor set per missing column required")
        missing = set(self.missing_cols)
        for cols in self.predictor_sets:
            if missing & set(cols):
                raise ValueError("predictor sets must not intersect missing columns")
        if not 0.0 < self.target_missing_rate < 1.0:
            raise ValueError("target_missing_rate must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "missing_cols": list(self.missing_cols),
            "predictor_sets": [list(s) for s in self.predictor_sets],
            "alpha": self.alpha,
            "target_missing_rate": self.target_missing_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarSpec":
        return cls(
            tuple(d["missing_cols"]),
            tuple(tuple(s) for s in d["predictor_sets"]),
            float(d["alpha"]),
            float(d["target_missing_rate"]),
            int(d["seed"]),
        )


@dataclass(frozen=True)
class CalibratedMechanism:
    """A spec plus its calibrated intercepts and per-cell observation probabilities.

    ``probabilities[:, k]`` is p(observed) for every row of ``missing_cols[k]``;
    all entries are strictly inside (0, 1) and the mean missing probability of
    each planted column matches the target rate to calibration tolerance.
    """

    spec: MarSpec
    intercepts: tuple[float, ...]
    probabilities: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "intercepts", tuple(float(b) for b in self.intercepts))
        if probs.shape[1] != len(self.spec.missing_cols):
            raise ValueError("one probability column per missing column required")
        if (probs <= 0).any() or (probs >= 1).any():
            raise ValueError("observation probabilities must lie strictly in (0, 1)")
        achieved = 1.0 - probs.mean(axis=0)
        if np.max(np.abs(achieved - self.spec.target_missing_rate)) > 2e-4:
            raise ValueError(
                f"expected missing rates {achieved} stray from target "
                f"{self.spec.target_missing_rate}"
            )

    def true_weight_ratios(self, k: int) -> np.ndarray:
        """Mechanism odds (1 - p)/p for planted column k, one entry per row."""
        p = self.probabilities[:, k]
        return (1.0 - p) / p

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "intercepts": list(self.intercepts)}

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2)


def sigmoid(z):
    """Numerically stable logistic function, elementwise."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def calibrate_intercept(scores: np.ndarray, target_rate: float,
                        tol: float = 1e-6, max_iter: int = 200) -> float:
    """Find the intercept making mean(1 - sigmoid(scores + b)) hit target_rate.

    Bisection over [-50, 50]; the objective is strictly decreasing in the
    intercept. Raises if the interval does not bracket the target (pathological
    scores) rather than clamping silently.
    """
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not 0.01 < target_rate < 0.99:
        raise ValueError("target_rate must be in (0.01, 0.99)")

    def gap(b):
        return float(np.mean(1.0 - sigmoid(scores + b))) - target_rate

    lo, hi = -50.0, 50.0
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo < 0 or g_hi > 0:
        raise ValueError(
            f"cannot bracket target rate {target_rate} over [-50, 50]; "
            f"rate({lo})={g_lo + target_rate:.4g}, rate({hi})={g_hi + target_rate:.4g}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = gap(mid)
        if abs(g_mid) <= tol:
            return mid
        if g_mid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _column_scores(data: DataMatrix, spec: MarSpec) -> np.ndarray:
    """alpha * (standardized predictor sum) per row, one column per planted column."""
    scaled, _ = standardize_values(data.values)
    scores = np.zeros((data.n_rows, len(spec.missing_cols)))
    for k, cols in enumerate(spec.predictor_sets):
        if cols:
            scores[:, k] = spec.alpha * scaled[:, list(cols)].sum(axis=1)
        elif spec.alpha != 0.0:
            raise ValueError(
                f"missing column {spec.missing_cols[k]} has no predictors but alpha != 0"
            )
    return scores


def _draw_mask(probabilities: np.ndarray, spec: MarSpec, n_rows: int, d: int,
               seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    observed = np.ones((n_rows, d), dtype=bool)
    for k, col in enumerate(spec.missing_cols):
        observed[:, col] = rng.random(n_rows) < probabilities[:, k]
    return observed


def apply_mar_mask(data: DataMatrix, spec: MarSpec):
    """Plant missingness per a MarSpec; returns (MaskedDataset, CalibratedMechanism).

    Cells are masked by independent Bernoulli draws, deterministic given
    ``spec.seed``. If a planted column comes out fully missing or fully
    observed, the mask is redrawn once with seed+1 before giving up.
    """
    for col in spec.missing_cols:
        if not 0 <= col < data.n_cols:
            raise ValueError(f"missing column {col} out of range")
    for cols in spec.predictor_sets:
        for col in cols:
            if not 0 <= col < data.n_cols:
                raise ValueError(f"predictor column {col} out of range")

    scores = _column_scores(data, spec)
    intercepts = []
    probabilities = np.empty_like(scores)
    for k in range(scores.shape[1]):
        beta = calibrate_intercept(scores[:, k], spec.target_missing_rate)
        intercepts.append(beta)
        probabilities[:, k] = sigmoid(scores[:, k] + beta)
    probabilities = np.clip(probabilities, PROB_FLOOR, 1.0 - PROB_FLOOR)
    mechanism = CalibratedMechanism(spec, tuple(intercepts), probabilities)

    observed = _draw_mask(probabilities, spec, data.n_rows, data.n_cols, spec.seed)
    planted = list(spec.missing_cols)
    degenerate = [
        c for c in planted
        if observed[:, c].all() or not observed[:, c].any()
    ]
    if degenerate:
        observed = _draw_mask(probabilities, spec, data.n_rows, data.n_cols,
                              spec.seed + 1)
        degenerate = [
            c for c in planted
            if observed[:, c].all() or not observed[:, c].any()
        ]
        if degenerate:
            raise RuntimeError(
                f"degenerate mask for columns {degenerate} after one resample; "
                "lower the rate or increase n"
            )
    ds = MaskedDataset(data, MaskMatrix(observed))
    return ds, mechanism


def select_random_spec(data: DataMatrix, n_missing_cols: int, n_predictors: int,
                       seed: int, alpha: float = 0.0,
                       target_missing_rate: float = 0.3) -> MarSpec:
    """Draw a random MAR spec: which columns go missing and what drives them.

    Missing columns are sampled uniformly without replacement; each then gets
    ``n_predictors`` predictors drawn from the complement of the whole missing
    set, so predictor columns stay fully observed.
    """
    if not 1 <= n_missing_cols <= MAX_MISSING_COLS:
        raise ValueError(f"n_missing_cols must be in 1..{MAX_MISSING_COLS}")
    if not 1 <= n_predictors <= MAX_PREDICTORS:
        raise ValueError(f"n_predictors must be in 1..{MAX_PREDICTORS}")
    d = data.n_cols
    if d <= n_missing_cols:
        raise ValueError(f"d={d} too small for {n_missing_cols} missing columns")
    if d - n_missing_cols < n_predictors:
        raise ValueError(
            f"d={d} leaves fewer than {n_predictors} predictor candidates"
        )
    rng = np.random.default_rng(seed)
    missing = np.sort(rng.choice(d, size=n_missing_cols, replace=False))
    pool = np.setdiff1d(np.arange(d), missing)
    predictor_sets = tuple(
        tuple(int(c) for c in np.sort(rng.choice(pool, size=n_predictors, replace=False)))
        for _ in missing
    )
    return MarSpec(
        tuple(int(c) for c in missing),
        predictor_sets,
        alpha,
        target_missing_rate,
        seed,
    )
