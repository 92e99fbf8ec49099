"""End-to-end glue: generate, label, train, evaluate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import BeamDemand, DemandModelParams, GridSpec, aggregate, sample_grid
from .metrics import EvalRecord, MetricsReport, evaluate
from .ml.preprocess import maxpool
from .ml.training import Model, predict_config
from .optimizer import LabeledSet, SystemScenario


@dataclass
class Dataset:
    demands: list[BeamDemand]
    pooled: np.ndarray  # (n, rows, cols) max-pooled grids


def generate_dataset(
    params: DemandModelParams,
    scenario: SystemScenario,
    n_samples: int,
    pool_size: int = 4,
    spec: GridSpec = GridSpec(),
    sample_ids=None,
) -> Dataset:
    """Demand vectors and pooled grids; grids are regenerated from the seed, never stored."""
    ids = range(n_samples) if sample_ids is None else sample_ids
    demands, pooled = [], []
    for i in ids:
        grid = sample_grid(params, scenario.geometry, int(i), spec)
        demands.append(aggregate(grid, scenario.geometry, sample_id=int(i)))
        pooled.append(maxpool(grid, pool_size))
    return Dataset(demands, np.array(pooled))


def evaluation_records(
    model: Model,
    pooled: np.ndarray,
    demands: list[BeamDemand],
    labels: LabeledSet,
    scenario: SystemScenario,
) -> list[EvalRecord]:
    """Predict a configuration per sample and pair it with its true label.

    ``pooled``, ``demands`` and ``labels`` must be aligned sample by sample.
    """
    lookup = {v: i for i, v in enumerate(model.class_table)}
    feats = model.features(pooled)
    records = []
    for x, d, cid in zip(feats, demands, labels.class_ids):
        a = predict_config(model, x, d, scenario)
        records.append(
            EvalRecord(
                sample_id=d.sample_id,
                true_class=int(cid),
                predicted_class=lookup.get(a.option_index, -1),
                requested=np.asarray(d.requested, dtype=float),
                offered=a.offered,
            )
        )
    return records


def oracle_records(demands: list[BeamDemand], labels: LabeledSet) -> list[EvalRecord]:
    """Records whose prediction is the optimal label itself."""
    return [
        EvalRecord(d.sample_id, int(c), int(c), np.asarray(d.requested, dtype=float), a.offered)
        for d, c, a in zip(demands, labels.class_ids, labels.assignments)
    ]


def evaluate_model(model, pooled, demands, labels, scenario) -> MetricsReport:
    records = evaluation_records(model, pooled, demands, labels, scenario)
    return evaluate(records, scenario.c_max, label_classes=range(len(labels.class_table)))
