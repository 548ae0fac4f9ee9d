"""Round-robin imputation: mean-fill, then cycle through incomplete columns,
fitting a weighted conditional model per column on its observed rows and
overwriting the missing entries with its predictions, for a fixed number of
sweeps.

Each column step re-estimates the importance weights from the freshly
completed matrix (unless the run is unweighted, which is the identical code
path with unit weights), standardizes the predictor columns with statistics
of the rows where the target column is observed, fits on those rows, and
predicts the rest. Observed cells are never altered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import MaskedDataset
from .propensity import DEFAULT_CLIP, DEFAULT_L2, effective_sample_size, weights_for_column
from .regressors import RegressorSpec, fit_regressor, predict, weighted_mse

__all__ = [
    "ImputationConfig",
    "ColumnDiagnostics",
    "IterationDiagnostics",
    "ImputationResult",
    "initial_impute",
    "visitation_order",
    "impute",
    "impute_column_step",
]

ASCENDING_MISSING = "ascending_missing_count"


@dataclass(frozen=True)
class ImputationConfig:
    """Everything one imputation run depends on."""

    regressor: RegressorSpec = field(default_factory=RegressorSpec)
    weighted: bool = True
    n_sweeps: int = 5
    visitation: str | tuple[int, ...] = ASCENDING_MISSING
    clip_epsilon: float = DEFAULT_CLIP
    propensity_l2: float = DEFAULT_L2
    seed: int = 0

    def __post_init__(self):
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be >= 1")
        if isinstance(self.visitation, str):
            if self.visitation != ASCENDING_MISSING:
                raise ValueError(f"unknown visitation policy {self.visitation!r}")
        else:
            object.__setattr__(self, "visitation",
                               tuple(int(c) for c in self.visitation))

    def to_dict(self) -> dict:
        return {
            "regressor": self.regressor.to_dict(),
            "weighted": self.weighted,
            "n_sweeps": self.n_sweeps,
            "visitation": self.visitation if isinstance(self.visitation, str)
            else list(self.visitation),
            "clip_epsilon": self.clip_epsilon,
            "propensity_l2": self.propensity_l2,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImputationConfig":
        visitation = d.get("visitation", ASCENDING_MISSING)
        if not isinstance(visitation, str):
            visitation = tuple(visitation)
        return cls(
            regressor=RegressorSpec.from_dict(d.get("regressor", {})),
            weighted=bool(d.get("weighted", True)),
            n_sweeps=int(d.get("n_sweeps", 5)),
            visitation=visitation,
            clip_epsilon=float(d.get("clip_epsilon", DEFAULT_CLIP)),
            propensity_l2=float(d.get("propensity_l2", DEFAULT_L2)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class ColumnDiagnostics:
    column: int
    train_weighted_mse: float
    mean_abs_update: float
    effective_sample_size: float


@dataclass(frozen=True)
class IterationDiagnostics:
    sweep: int
    columns: tuple[ColumnDiagnostics, ...]


@dataclass(frozen=True)
class ImputationResult:
    completed: np.ndarray
    per_sweep: tuple[IterationDiagnostics, ...]
    config: ImputationConfig


def initial_impute(ds: MaskedDataset) -> MaskedDataset:
    """Fill every missing cell with its column's observed mean."""
    completed = ds.data.values.copy()
    obs = ds.mask.observed
    for j in ds.missing_columns():
        col_obs = obs[:, j]
        completed[~col_obs, j] = ds.data.values[col_obs, j].mean()
    return ds.with_completed(completed)


def visitation_order(ds: MaskedDataset, policy) -> list[int]:
    """Resolve the column visitation order over the imputable columns.

    The default sorts by ascending missing count with ties broken by column
    index; an explicit order must be a permutation of the imputable columns.
    """
    imputable = ds.missing_columns()
    if not imputable:
        raise ValueError("no columns with missing entries")
    if isinstance(policy, str):
        if policy != ASCENDING_MISSING:
            raise ValueError(f"unknown visitation policy {policy!r}")
        return sorted(imputable, key=lambda j: (ds.mask.missing_count(j), j))
    order = [int(c) for c in policy]
    if sorted(order) != sorted(imputable):
        raise ValueError(
            f"visitation order {order} is not a permutation of the imputable "
            f"columns {imputable}"
        )
    return order


def _step_seed(cfg: ImputationConfig, sweep: int, column: int) -> int:
    state = np.random.SeedSequence([cfg.seed, sweep, column]).generate_state(2)
    return int(state[0]) ^ (int(state[1]) << 32)


def _standardize_by_rows(predictors: np.ndarray, fit_rows: np.ndarray):
    mean = predictors[fit_rows].mean(axis=0)
    std = predictors[fit_rows].std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    return (predictors - mean) / scale


def _column_step(values, observed, completed, i, cfg, sweep) -> ColumnDiagnostics:
    """One Algorithm-2 column update; mutates ``completed`` in place."""
    obs_col = observed[:, i]
    obs_rows = np.flatnonzero(obs_col)
    miss_rows = np.flatnonzero(~obs_col)
    if cfg.weighted:
        weights = weights_for_column(
            completed, obs_col, i, l2=cfg.propensity_l2,
            clip_epsilon=cfg.clip_epsilon,
        ).weights
    else:
        weights = np.ones(obs_rows.shape[0])
    predictors = np.delete(completed, i, axis=1)
    predictors = _standardize_by_rows(predictors, obs_rows)
    x_train = predictors[obs_rows]
    y_train = values[obs_rows, i]
    spec = cfg.regressor.with_seed(_step_seed(cfg, sweep, i))
    model = fit_regressor(spec, x_train, y_train, weights)
    preds = predict(model, predictors[miss_rows])
    diag = ColumnDiagnostics(
        column=int(i),
        train_weighted_mse=weighted_mse(model, x_train, y_train, weights),
        mean_abs_update=float(np.mean(np.abs(completed[miss_rows, i] - preds))),
        effective_sample_size=effective_sample_size(weights),
    )
    completed[miss_rows, i] = preds
    return diag


def impute_column_step(ds: MaskedDataset, i: int, cfg: ImputationConfig,
                       sweep: int = 0):
    """Run a single column update; returns (updated dataset, diagnostics)."""
    if i not in ds.missing_columns():
        raise ValueError(f"column {i} has no missing entries")
    completed = ds.completed.copy()
    diag = _column_step(ds.data.values, ds.mask.observed, completed, i, cfg, sweep)
    return ds.with_completed(completed), diag


def impute(ds: MaskedDataset, cfg: ImputationConfig) -> ImputationResult:
    """Run the full round-robin loop for ``cfg.n_sweeps`` sweeps.

    Starts from a fresh mean imputation, visits the incomplete columns in the
    configured order, and is deterministic given (ds, cfg). With no missing
    data the input comes back unchanged and no sweeps are recorded.
    """
    if not ds.missing_columns():
        return ImputationResult(ds.completed.copy(), (), cfg)
    order = visitation_order(ds, cfg.visitation)
    completed = initial_impute(ds).completed.copy()
    values = ds.data.values
    observed = ds.mask.observed
    per_sweep = []
    for sweep in range(cfg.n_sweeps):
        diags = []
        for i in order:
            try:
                diags.append(_column_step(values, observed, completed, i, cfg, sweep))
            except Exception as exc:
                raise RuntimeError(
                    f"column {i} failed at sweep {sweep}: {exc}"
                ) from exc
        per_sweep.append(IterationDiagnostics(sweep, tuple(diags)))
    return ImputationResult(completed, tuple(per_sweep), cfg)
