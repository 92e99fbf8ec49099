"""Exact per-beam payload configuration under power and spectrum caps.

An assignment picks one catalog option per beam. Its cost is

    (b1/B) sum |C_b - R_b| + (b2/B) sum P_b[W] + (b3/B) sum BW_b

subject to: each beam meets its demand when it can (otherwise it runs the
max-power, max-bandwidth option), total power stays under ``p_max_total`` and
the bandwidth of each frequency color stays under ``bw_max_per_color``.

``solve_exact`` enumerates each color's feasible combinations, drops the
dominated ones and runs a depth-first branch and bound across colors.
``solve_bruteforce`` enumerates everything and is kept as the test oracle.
Both break ties by the lexicographically smallest option vector.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .demand import BeamDemand, BeamGeometry
from .linkbudget import PayloadOption, db_to_linear, load_catalog

log = logging.getLogger(__name__)

C_MAX_DEFAULT = 1033.4e6
DEFAULT_WEIGHTS = (1.0 / C_MAX_DEFAULT, 0.1 / 25.12, 0.1 / 500e6)
BRUTEFORCE_LIMIT = 10**7

# Slack used when pruning on partial sums; leaves are always compared exactly.
_PRUNE_TOL = 1e-9


class InfeasibleScenarioError(RuntimeError):
    """No assignment satisfies the demand filter together with the caps."""


@dataclass(frozen=True)
class SystemScenario:
    geometry: BeamGeometry
    catalog: tuple[PayloadOption, ...]
    color_of_beam: tuple[int, ...]  # 1..n_colors
    n_colors: int
    p_max_total: float  # W
    bw_max_per_color: float  # Hz
    p_max_beam: float = 14.0  # dBW
    bw_max_beam: float = 500e6  # Hz
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    _arrays: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if len(self.color_of_beam) != self.geometry.n_beams:
            raise ValueError("color_of_beam must have one entry per beam")
        if any(not 1 <= c <= self.n_colors for c in self.color_of_beam):
            raise ValueError(f"colors must lie in 1..{self.n_colors}")
        if any(w < 0 for w in self.weights):
            raise ValueError("objective weights must be non-negative")
        if self.p_max_total < max(o.power_w for o in self.catalog):
            raise ValueError("p_max_total is below the largest single-beam power")
        self._arrays["capacity"] = np.array([o.offered_capacity for o in self.catalog])
        self._arrays["power_w"] = np.array([o.power_w for o in self.catalog])
        self._arrays["bandwidth"] = np.array([o.bandwidth for o in self.catalog])
        self._arrays["max_option"] = self._find_max_option()

    def _find_max_option(self) -> int:
        for i, o in enumerate(self.catalog):
            if o.power == self.p_max_beam and o.bandwidth == self.bw_max_beam:
                return i
        return int(np.argmax(self._arrays["capacity"]))

    @property
    def n_beams(self) -> int:
        return self.geometry.n_beams

    @property
    def n_options(self) -> int:
        return len(self.catalog)

    @property
    def capacity(self) -> np.ndarray:
        return self._arrays["capacity"]

    @property
    def power_w(self) -> np.ndarray:
        return self._arrays["power_w"]

    @property
    def bandwidth(self) -> np.ndarray:
        return self._arrays["bandwidth"]

    @property
    def max_option(self) -> int:
        """0-based position of the max-power, max-bandwidth option."""
        return self._arrays["max_option"]

    @property
    def c_max(self) -> float:
        return float(self.capacity[self.max_option])

    def beams_of_color(self, color: int) -> list[int]:
        return [b for b, c in enumerate(self.color_of_beam) if c == color]

    @classmethod
    def default(cls, **overrides) -> "SystemScenario":
        kw = dict(
            geometry=BeamGeometry.default(),
            catalog=tuple(load_catalog()),
            color_of_beam=tuple(b % 4 + 1 for b in range(10)),
            n_colors=4,
            p_max_total=140.0,
            bw_max_per_color=1e9,
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class Assignment:
    """One option index (1-based, as in the catalog) per beam."""

    option_index: tuple[int, ...]
    offered: np.ndarray = field(compare=False, repr=False)
    power: np.ndarray = field(compare=False, repr=False)  # W
    bandwidth: np.ndarray = field(compare=False, repr=False)  # Hz

    @classmethod
    def from_options(cls, option_index: Sequence[int], s: SystemScenario) -> "Assignment":
        idx = np.asarray(option_index, dtype=int) - 1
        if idx.shape != (s.n_beams,) or idx.min() < 0 or idx.max() >= s.n_options:
            raise ValueError(f"invalid option vector {tuple(option_index)}")
        return cls(
            option_index=tuple(int(i) + 1 for i in idx),
            offered=s.capacity[idx],
            power=s.power_w[idx],
            bandwidth=s.bandwidth[idx],
        )


@dataclass
class FeasibilityReport:
    demand_slack: np.ndarray  # C_b - R_b
    capped: np.ndarray  # R_b above C_max: beam must run the max option
    demand_ok: np.ndarray
    power_slack: float  # W
    color_slack: np.ndarray  # Hz, one per color
    p_max_total: float

    @property
    def power_ok(self) -> bool:
        return self.power_slack >= 0

    @property
    def color_ok(self) -> np.ndarray:
        return self.color_slack >= 0

    @property
    def coupling_ok(self) -> bool:
        return self.power_ok and bool(self.color_ok.all())

    @property
    def feasible(self) -> bool:
        return self.coupling_ok and bool(self.demand_ok.all())


def _seqsum(x: np.ndarray) -> np.ndarray:
    """Sum over the last axis strictly left to right.

    Both solvers total an assignment with this, so equal assignments always
    get bit-identical totals regardless of the search path.
    """
    x = np.asarray(x, dtype=float)
    total = x[..., 0].copy()
    for k in range(1, x.shape[-1]):
        total += x[..., k]
    return total


def _beam_cost_table(demand: BeamDemand, s: SystemScenario) -> np.ndarray:
    """(B, K) matrix of per-beam objective terms."""
    b1, b2, b3 = s.weights
    B = s.n_beams
    R = np.asarray(demand.requested, dtype=float)[:, None]
    return (b1 * np.abs(s.capacity[None, :] - R) + b2 * s.power_w[None, :] + b3 * s.bandwidth[None, :]) / B


def objective(a: Assignment, demand: BeamDemand, s: SystemScenario) -> float:
    table = _beam_cost_table(demand, s)
    idx = np.asarray(a.option_index) - 1
    return float(_seqsum(table[np.arange(s.n_beams), idx]))


def candidate_options(b: int, requested: float, s: SystemScenario) -> tuple[int, ...]:
    """1-based options that satisfy beam ``b``'s demand, or the max option alone."""
    ok = np.flatnonzero(s.capacity >= requested)
    if ok.size == 0:
        return (s.max_option + 1,)
    return tuple(int(i) + 1 for i in ok)


def _candidate_mask(demand: BeamDemand, s: SystemScenario) -> np.ndarray:
    mask = np.zeros((s.n_beams, s.n_options), dtype=bool)
    for b, r in enumerate(demand.requested):
        mask[b, np.asarray(candidate_options(b, r, s)) - 1] = True
    return mask


def check_feasible(a: Assignment, demand: BeamDemand, s: SystemScenario) -> FeasibilityReport:
    R = np.asarray(demand.requested, dtype=float)
    mask = _candidate_mask(demand, s)
    idx = np.asarray(a.option_index) - 1
    color_slack = np.array(
        [
            s.bw_max_per_color - (_seqsum(a.bandwidth[bs]) if bs else 0.0)
            for bs in (s.beams_of_color(c) for c in range(1, s.n_colors + 1))
        ],
        dtype=float,
    )
    return FeasibilityReport(
        demand_slack=a.offered - R,
        capped=R > s.c_max,
        demand_ok=mask[np.arange(s.n_beams), idx],
        power_slack=float(s.p_max_total - _seqsum(a.power)),
        color_slack=color_slack,
        p_max_total=s.p_max_total,
    )


def _enumerate(cost: np.ndarray, allowed: np.ndarray, s: SystemScenario) -> tuple[int, ...]:
    """Exhaustive minimum over all option vectors, in lexicographic order."""
    B, K = cost.shape
    if K**B > BRUTEFORCE_LIMIT:
        raise ValueError(f"{K}^{B} assignments exceed the brute-force limit")
    colors = [s.beams_of_color(c) for c in range(1, s.n_colors + 1)]
    best_total, best_vec = math.inf, None
    lead = max(0, B - 5)  # enumerate leading beams in an outer loop to bound memory
    tail = np.array(list(itertools.product(range(K), repeat=B - lead)), dtype=np.intp).reshape(-1, B - lead)
    rows = np.arange(B)
    for head in itertools.product(range(K), repeat=lead):
        combos = np.hstack([np.broadcast_to(np.array(head, dtype=np.intp), (len(tail), lead)), tail])
        ok = allowed[rows, combos].all(axis=1)
        ok &= _seqsum(s.power_w[combos]) <= s.p_max_total
        for bs in colors:
            if bs:
                ok &= _seqsum(s.bandwidth[combos[:, bs]]) <= s.bw_max_per_color
        if not ok.any():
            continue
        totals = np.where(ok, _seqsum(cost[rows, combos]), math.inf)
        i = int(np.argmin(totals))  # first minimum = lexicographically smallest
        if totals[i] < best_total:
            best_total, best_vec = float(totals[i]), tuple(int(k) + 1 for k in combos[i])
    if best_vec is None:
        raise InfeasibleScenarioError("no assignment satisfies demand, power and bandwidth caps")
    return best_vec


@dataclass
class _ColorTable:
    beams: list[int]
    options: np.ndarray  # (n, len(beams)) 0-based
    cost: np.ndarray
    power: np.ndarray


def _color_table(beams: list[int], cost: np.ndarray, allowed: np.ndarray, s: SystemScenario) -> _ColorTable:
    choices = [np.flatnonzero(allowed[b]) for b in beams]
    grids = np.meshgrid(*choices, indexing="ij")
    combos = np.stack([g.ravel() for g in grids], axis=1)
    ok = _seqsum(s.bandwidth[combos]) <= s.bw_max_per_color
    combos = combos[ok]
    c = _seqsum(cost[beams][np.arange(len(beams)), combos]) if len(combos) else np.empty(0)
    p = _seqsum(s.power_w[combos]) if len(combos) else np.empty(0)
    order = np.lexsort((p, c))
    combos, c, p = combos[order], c[order], p[order]
    # Drop combinations beaten on cost (by more than the tolerance) by one
    # that uses no more power. Dominance is transitive, so comparing against
    # the power prefix-minimum over all clearly-cheaper combos is enough.
    n_cheaper = np.searchsorted(c, c - _PRUNE_TOL, side="left")
    prefix_min = np.minimum.accumulate(p) if len(p) else p
    beaten = np.zeros(len(c), dtype=bool)
    has = n_cheaper > 0
    beaten[has] = prefix_min[n_cheaper[has] - 1] <= p[has]
    keep = ~beaten
    return _ColorTable(beams, combos[keep], c[keep], p[keep])


def _branch_and_bound(cost: np.ndarray, allowed: np.ndarray, s: SystemScenario) -> tuple[int, ...]:
    B = s.n_beams
    tables = []
    for color in range(1, s.n_colors + 1):
        beams = s.beams_of_color(color)
        if not beams:
            continue
        t = _color_table(beams, cost, allowed, s)
        if len(t.cost) == 0:
            raise InfeasibleScenarioError(f"color {color}: no combination fits the bandwidth cap")
        tables.append(t)
    # Tightest colors first keeps the tree narrow near the root.
    tables.sort(key=lambda t: (len(t.cost), t.beams[0]))
    n = len(tables)
    rest_cost = np.zeros(n + 1)
    rest_power = np.zeros(n + 1)
    for d in range(n - 1, -1, -1):
        rest_cost[d] = rest_cost[d + 1] + tables[d].cost.min()
        rest_power[d] = rest_power[d + 1] + tables[d].power.min()
    if rest_power[0] > s.p_max_total + _PRUNE_TOL:
        raise InfeasibleScenarioError("minimum total power exceeds the power cap")

    best = [math.inf, None]  # canonical total, 0-based option vector
    vec = np.zeros(B, dtype=np.intp)
    rows = np.arange(B)
    tables_cost = [t.cost.tolist() for t in tables]
    tables_power = [t.power.tolist() for t in tables]

    def leaf():
        if _seqsum(s.power_w[vec]) > s.p_max_total:
            return
        total = float(_seqsum(cost[rows, vec]))
        cand = tuple(vec.tolist())
        if total < best[0] or (total == best[0] and cand < best[1]):
            best[0], best[1] = total, cand

    def descend(d: int, part_cost: float, part_power: float):
        if d == n:
            leaf()
            return
        t = tables[d]
        for i, (c, p) in enumerate(zip(tables_cost[d], tables_power[d])):
            if part_cost + c + rest_cost[d + 1] > best[0] + _PRUNE_TOL:
                break  # costs are sorted
            if part_power + p + rest_power[d + 1] > s.p_max_total + _PRUNE_TOL:
                continue
            vec[t.beams] = t.options[i]
            descend(d + 1, part_cost + c, part_power + p)

    descend(0, 0.0, 0.0)
    if best[1] is None:
        raise InfeasibleScenarioError("no assignment satisfies demand, power and bandwidth caps")
    return tuple(k + 1 for k in best[1])


def solve_bruteforce(demand: BeamDemand, s: SystemScenario) -> Assignment:
    """Oracle: enumerate every option vector. Only viable for small B."""
    cost = _beam_cost_table(demand, s)
    return Assignment.from_options(_enumerate(cost, _candidate_mask(demand, s), s), s)


def solve_exact(demand: BeamDemand, s: SystemScenario) -> Assignment:
    """Minimum-cost feasible assignment; matches ``solve_bruteforce`` exactly."""
    cost = _beam_cost_table(demand, s)
    return Assignment.from_options(_branch_and_bound(cost, _candidate_mask(demand, s), s), s)


def _nearest_cost(predicted: np.ndarray, s: SystemScenario) -> np.ndarray:
    predicted = np.asarray(predicted, dtype=float)
    if predicted.shape != (s.n_beams,):
        raise ValueError(f"expected {s.n_beams} predicted capacities, got shape {predicted.shape}")
    return np.abs(s.capacity[None, :] - predicted[:, None]) / s.n_beams


def nearest_config(predicted_capacity, demand: BeamDemand | None, s: SystemScenario) -> Assignment:
    """Cap-feasible assignment closest in mean absolute error to a prediction.

    Demand filtering is deliberately not applied; ``demand`` is accepted for
    interface symmetry with the solvers.
    """
    cost = _nearest_cost(predicted_capacity, s)
    allowed = np.ones_like(cost, dtype=bool)
    return Assignment.from_options(_branch_and_bound(cost, allowed, s), s)


def nearest_config_bruteforce(predicted_capacity, s: SystemScenario) -> Assignment:
    cost = _nearest_cost(predicted_capacity, s)
    return Assignment.from_options(_enumerate(cost, np.ones_like(cost, dtype=bool), s), s)


@dataclass
class LabeledSet:
    sample_ids: list[int]
    assignments: list[Assignment]
    capacities: np.ndarray  # (n, B) bps
    class_ids: np.ndarray
    class_table: list[tuple[int, ...]]  # class id -> option vector
    infeasible: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.sample_ids)


def build_class_table(vectors) -> list[tuple[int, ...]]:
    return sorted(set(tuple(v) for v in vectors))


def label_dataset(demands: Sequence[BeamDemand], s: SystemScenario) -> LabeledSet:
    """Optimal labels for every sample; infeasible samples are skipped and counted."""
    ids, assignments, infeasible = [], [], []
    for d in demands:
        try:
            a = solve_exact(d, s)
        except InfeasibleScenarioError:
            infeasible.append(d.sample_id)
            continue
        ids.append(d.sample_id)
        assignments.append(a)
    if infeasible:
        log.warning("%d of %d samples infeasible, skipped", len(infeasible), len(demands))
    table = build_class_table(a.option_index for a in assignments)
    lookup = {v: i for i, v in enumerate(table)}
    caps = np.array([a.offered for a in assignments]).reshape(len(assignments), s.n_beams)
    return LabeledSet(
        sample_ids=ids,
        assignments=assignments,
        capacities=caps,
        class_ids=np.array([lookup[a.option_index] for a in assignments], dtype=int),
        class_table=table,
        infeasible=infeasible,
    )


# -- file formats ---------------------------------------------------------


def write_labels(path: str | Path, labels: LabeledSet):
    B = labels.capacities.shape[1] if len(labels) else 0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["sample_id", "class_id"] + [f"opt_{b + 1}" for b in range(B)] + [f"C_{b + 1}" for b in range(B)]
        )
        for sid, cid, a in zip(labels.sample_ids, labels.class_ids, labels.assignments):
            w.writerow([sid, int(cid), *a.option_index, *(repr(float(c)) for c in a.offered)])


def read_labels(path: str | Path, s: SystemScenario) -> LabeledSet:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        B = s.n_beams
        if len(header) != 2 + 2 * B:
            raise ValueError(f"{path}: label file has {len(header)} columns, scenario needs {2 + 2 * B}")
        rows = list(r)
    assignments = [Assignment.from_options([int(x) for x in row[2 : 2 + B]], s) for row in rows]
    table = build_class_table(a.option_index for a in assignments)
    return LabeledSet(
        sample_ids=[int(row[0]) for row in rows],
        assignments=assignments,
        capacities=np.array([a.offered for a in assignments]).reshape(len(rows), B),
        class_ids=np.array([int(row[1]) for row in rows], dtype=int),
        class_table=table,
    )


def scenario_to_dict(s: SystemScenario, catalog_ref: str = "builtin") -> dict:
    return {
        "beam_centers": [list(c) for c in s.geometry.centers],
        "coverage_radius": s.geometry.coverage_radius,
        "catalog": catalog_ref,
        "color_of_beam": list(s.color_of_beam),
        "n_colors": s.n_colors,
        "p_max_total_w": s.p_max_total,
        "bw_max_per_color_hz": s.bw_max_per_color,
        "p_max_beam_dbw": s.p_max_beam,
        "bw_max_beam_hz": s.bw_max_beam,
        "betas": list(s.weights),
    }


def scenario_from_dict(d: dict, base_dir: Path | None = None) -> SystemScenario:
    required = ["beam_centers", "color_of_beam", "n_colors", "p_max_total_w", "bw_max_per_color_hz"]
    missing = [k for k in required if k not in d]
    if missing:
        raise ValueError(f"scenario is missing field(s): {', '.join(missing)}")
    ref = d.get("catalog", "builtin")
    if ref == "builtin":
        catalog = load_catalog()
    else:
        path = Path(ref)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        catalog = load_catalog(path)
    geometry = BeamGeometry(
        centers=tuple((float(a), float(b)) for a, b in d["beam_centers"]),
        coverage_radius=float(d.get("coverage_radius", 2.2)),
    )
    return SystemScenario(
        geometry=geometry,
        catalog=tuple(catalog),
        color_of_beam=tuple(int(c) for c in d["color_of_beam"]),
        n_colors=int(d["n_colors"]),
        p_max_total=float(d["p_max_total_w"]),
        bw_max_per_color=float(d["bw_max_per_color_hz"]),
        p_max_beam=float(d.get("p_max_beam_dbw", 14.0)),
        bw_max_beam=float(d.get("bw_max_beam_hz", 500e6)),
        weights=tuple(float(b) for b in d.get("betas", DEFAULT_WEIGHTS)),
    )


def load_scenario(path: str | Path | None = None) -> SystemScenario:
    if path is None:
        text = resources.files("satrrm.data").joinpath("scenario_10beam.json").read_text()
        return scenario_from_dict(json.loads(text))
    path = Path(path)
    return scenario_from_dict(json.loads(path.read_text()), base_dir=path.parent)


def save_scenario(path: str | Path, s: SystemScenario, catalog_ref: str = "builtin"):
    Path(path).write_text(json.dumps(scenario_to_dict(s, catalog_ref), indent=2) + "\n")


# -- randomized solver cross-check ------------------------------------------


def random_instance(rng: np.random.Generator, n_beams: int) -> tuple[BeamDemand, SystemScenario]:
    """A small random scenario and demand, with caps that sometimes bind."""
    catalog = tuple(load_catalog())
    n_colors = int(rng.integers(1, n_beams + 1))
    peak_w = max(o.power_w for o in catalog)
    weights = tuple(float(w) for w in rng.uniform(0, 2, 3) * np.array(DEFAULT_WEIGHTS))
    s = SystemScenario(
        geometry=BeamGeometry(tuple((40.0 + 3 * b, 0.0) for b in range(n_beams))),
        catalog=catalog,
        color_of_beam=tuple(int(c) for c in rng.integers(1, n_colors + 1, n_beams)),
        n_colors=n_colors,
        p_max_total=float(rng.uniform(peak_w, n_beams * peak_w * 1.2)),
        bw_max_per_color=float(rng.uniform(250e6, 2.5e9)),
        weights=weights,
    )
    requested = rng.uniform(0, rng.uniform(0.3, 1.1) * C_MAX_DEFAULT, n_beams)
    requested[rng.random(n_beams) < 0.1] = 0.0
    return BeamDemand(requested=requested), s


@dataclass
class OracleCheck:
    instances: int
    mismatches: list[str]
    infeasible: int

    @property
    def passed(self) -> bool:
        return not self.mismatches


def _run(solver, demand, s):
    try:
        a = solver(demand, s)
    except InfeasibleScenarioError:
        return None, None
    return a.option_index, objective(a, demand, s)


def oracle_check(n_instances: int = 500, seed: int = 0, beams: tuple[int, int] = (2, 5)) -> OracleCheck:
    """Compare ``solve_exact`` with ``solve_bruteforce`` on random instances."""
    rng = np.random.default_rng(seed)
    mismatches, infeasible = [], 0
    for k in range(n_instances):
        demand, s = random_instance(rng, int(rng.integers(beams[0], beams[1] + 1)))
        a_ref, f_ref = _run(solve_bruteforce, demand, s)
        a_got, f_got = _run(solve_exact, demand, s)
        infeasible += a_ref is None
        if a_ref != a_got or (f_ref is not None and abs(f_ref - f_got) > 1e-12):
            mismatches.append(f"instance {k}: oracle {a_ref} vs exact {a_got}")
    return OracleCheck(n_instances, mismatches, infeasible)
