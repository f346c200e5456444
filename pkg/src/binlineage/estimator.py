"""Scikit-learn-style front end for the joint lineage/time inference.

LineageReconstructor is a plain BaseEstimator: constructor arguments are
stored verbatim (so get_params/set_params/clone compose with the wider
ecosystem) and all validation happens in fit. X is a Dataset or a path to a
dataset JSON file; there is no y.
"""

from __future__ import annotations

from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .domain import Dataset, LineageGraph, load_dataset, validate_dataset
from .lineage import (
    AnnealSchedule,
    InferConfig,
    LineageModelParams,
    infer_lineage,
)
from .timemodel import TimeModelParams


class LineageReconstructor(BaseEstimator):
    """Infer a multi-root lineage DAG and MAP creation times for a dataset.

    Parameters mirror the time-model priors (p_obf, p_empty, p_lag), the
    structure priors (p_root, p_k, k_max, lam) and the search configuration.

    Attributes after fit:
        lineage_           inferred LineageGraph
        times_             dict id -> MAP creation tick
        joint_log_score_   joint log score of the returned state
        restarts_          per-restart diagnostics
        result_            the full LineageResult
    """

    def __init__(
        self,
        p_obf: float = 0.3,
        p_empty: float = 0.5,
        p_lag: float = 0.2,
        p_root: float = 0.1,
        p_k: float = 0.5,
        k_max: int = 3,
        lam: float = 4.0,
        restarts: int = 16,
        max_rounds: int = 20,
        epsilon: float = 1e-6,
        anneal_t0: float = 5.0,
        anneal_alpha: float = 0.995,
        anneal_iters: int = 10_000,
        time_inference: str = "exact",
        mh_samples: int = 50_000,
        random_state: int = 0,
    ) -> None:
        self.p_obf = p_obf
        self.p_empty = p_empty
        self.p_lag = p_lag
        self.p_root = p_root
        self.p_k = p_k
        self.k_max = k_max
        self.lam = lam
        self.restarts = restarts
        self.max_rounds = max_rounds
        self.epsilon = epsilon
        self.anneal_t0 = anneal_t0
        self.anneal_alpha = anneal_alpha
        self.anneal_iters = anneal_iters
        self.time_inference = time_inference
        self.mh_samples = mh_samples
        self.random_state = random_state

    def _as_dataset(self, X) -> Dataset:
        if isinstance(X, Dataset):
            validate_dataset(X)
            return X
        if isinstance(X, (str, Path)):
            return load_dataset(X)
        raise TypeError(f"X must be a Dataset or a path to a dataset JSON file, got {type(X)}")

    def fit(self, X, y=None) -> "LineageReconstructor":
        dataset = self._as_dataset(X)
        time_params = TimeModelParams(
            p_obf=self.p_obf, p_empty=self.p_empty, p_lag=self.p_lag, window=dataset.window
        )
        lineage_params = LineageModelParams(
            p_root=self.p_root, p_k=self.p_k, k_max=self.k_max, lam=self.lam
        )
        config = InferConfig(
            restarts=self.restarts,
            max_rounds=self.max_rounds,
            epsilon=self.epsilon,
            anneal=AnnealSchedule(self.anneal_t0, self.anneal_alpha, self.anneal_iters),
            time_inference=self.time_inference,
            mh_samples=self.mh_samples,
            seed=self.random_state,
        )
        result = infer_lineage(dataset, time_params, lineage_params, config, self.random_state)
        self.result_ = result
        self.lineage_ = result.lineage
        self.times_ = result.times
        self.joint_log_score_ = result.joint_log_score
        self.restarts_ = result.restarts
        return self

    def fit_predict(self, X, y=None) -> LineageGraph:
        return self.fit(X).lineage_

    def predict(self, X=None) -> LineageGraph:
        """Return the fitted lineage (inference is transductive: one dataset)."""
        if not hasattr(self, "lineage_"):
            raise NotFittedError("call fit before predict")
        return self.lineage_
