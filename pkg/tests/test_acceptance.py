"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible with ``-s`` or in
the ``-v`` log) before asserting. Criterion 6 trains both heads on the full
30 000-sample manifest and takes several minutes; deselect it with
``-m "not slow"`` for a quick pass.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from satrrm.cli import main
from satrrm.demand import default_demand_params, generate_demands
from satrrm.linkbudget import load_catalog, validate_catalog
from satrrm.metrics import EvalRecord, evaluate
from satrrm.ml import (
    CLASSIFICATION,
    REGRESSION,
    Cache,
    backward,
    fit_preprocessor,
    forward,
    grad_classification,
    grad_regression,
    init_network,
    loss_classification,
    loss_regression,
)
from satrrm.optimizer import InfeasibleScenarioError, SystemScenario, label_dataset, oracle_check, solve_exact
from satrrm.pipeline import oracle_records

ROOT = Path(__file__).resolve().parents[1]
MANIFEST = ROOT / "manifests" / "full_run.json"


@pytest.fixture
def verdict(capsys):
    def say(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        return ok

    return say


def test_1_catalog_reproduction(verdict):
    catalog = load_catalog()
    t = time.perf_counter()
    report = validate_catalog(catalog)
    elapsed = time.perf_counter() - t
    rel = [abs(o.offered_capacity - o.bandwidth * o.spectral_efficiency) / o.offered_capacity for o in catalog]
    ok = report.passed and max(rel) < 1e-4 and elapsed < 1e-3
    assert verdict(1, ok, f"max |C - BW*SE|/C = {max(rel):.2e}, validation took {elapsed * 1e3:.3f} ms")


def test_2_oracle_equivalence(verdict):
    t = time.perf_counter()
    r = oracle_check(500, seed=0, beams=(2, 5))
    elapsed = time.perf_counter() - t
    ok = r.passed and r.instances == 500 and elapsed < 60
    assert verdict(
        2, ok, f"{r.instances} instances, {len(r.mismatches)} mismatches, {r.infeasible} infeasible, {elapsed:.1f} s"
    )


def test_3_scale(verdict):
    s = SystemScenario.default()
    demands = generate_demands(default_demand_params(0), s.geometry, 2000)
    worst = 0.0
    t0 = time.perf_counter()
    for d in demands:
        t = time.perf_counter()
        try:
            solve_exact(d, s)
        except InfeasibleScenarioError:
            pass
        worst = max(worst, time.perf_counter() - t)
    projected = (time.perf_counter() - t0) / len(demands) * 30_000
    ok = worst < 1.0 and projected < 1800
    assert verdict(3, ok, f"worst sample {worst * 1e3:.1f} ms, 30 000 samples projected {projected:.0f} s")


def _numeric_grads(net, loss_fn, eps=1e-5):
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = loss_fn()
            p[idx] = old - eps
            down = loss_fn()
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out.append(g)
    return out


def _rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        # Entries that vanish up to rounding are judged on an absolute floor.
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-5)
        worst = max(worst, float(err.max()))
    return worst


def test_4_gradients(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(20):
        d_in, n_out = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        hidden = [int(h) for h in rng.integers(2, 6, rng.integers(0, 3))]
        x = rng.normal(size=(int(rng.integers(3, 8)), d_in))
        for head in (CLASSIFICATION, REGRESSION):
            net = init_network(d_in, hidden, n_out, head, seed=k)
            for b in net.biases:
                b[:] = rng.normal(scale=0.5, size=b.shape)
            cache = Cache()
            out = forward(net, x, cache)
            if head == CLASSIFICATION:
                ids = rng.integers(0, n_out, len(x))
                g = backward(net, cache, grad_classification(out, ids), logits=True)
                num = _numeric_grads(net, lambda: loss_classification(forward(net, x), ids))
            else:
                y, dem = rng.uniform(0, 1.2, (2, len(x), n_out))
                g = backward(net, cache, grad_regression(out, y, dem, 1.0))
                num = _numeric_grads(net, lambda: loss_regression(forward(net, x), y, dem, penalty=1.0))
            worst = max(worst, _rel_error(g, num))
    assert verdict(4, worst < 1e-4, f"20 networks x 2 losses, worst relative error {worst:.2e}")


def test_5_pca(verdict):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(500, 20)) @ (rng.normal(size=(20, 20)) * rng.uniform(0.1, 4, 20)) + rng.uniform(-9, 9, 20)
    p = fit_preprocessor(x, variance_threshold=1.0, whiten=False)
    z = p.standardize(x)
    V = p.pca_basis
    ortho = np.abs(V @ V.T - np.eye(len(V))).max()
    mu = np.abs(z.mean(axis=0)).max()
    sd = np.abs(z.std(axis=0) - 1).max()
    rec = np.abs(p.reconstruct(p.project(z)) - z).max()
    ok = ortho < 1e-8 and mu < 1e-8 and sd < 1e-6 and rec < 1e-6
    assert verdict(5, ok, f"orthonormality {ortho:.1e}, |mean| {mu:.1e}, |std-1| {sd:.1e}, reconstruction {rec:.1e}")


@pytest.mark.slow
def test_6_head_comparison_ordering(tmp_path, verdict):
    out = tmp_path / "full"
    for argv in (("gen",), ("label",), ("train", "--head", "cls"), ("train", "--head", "reg"), ("eval", "--head", "reg")):
        assert main([argv[0], "--manifest", str(MANIFEST), "--out", str(out), *argv[1:]]) == 0
    slots = json.loads((out / "report_reg.json").read_text())["extra"]["head_comparison"]
    cls, reg = slots["cls"], slots["reg"]
    a = reg["flexible_balanced_accuracy"] >= cls["flexible_balanced_accuracy"] >= cls["balanced_accuracy"]
    b = reg["flexible_balanced_accuracy"] >= 0.95
    c = max(cls["nmse_avg"], reg["nmse_avg"]) <= 0.15
    detail = (
        f"reg flex {reg['flexible_balanced_accuracy']:.4f} >= cls flex {cls['flexible_balanced_accuracy']:.4f} "
        f">= cls bal {cls['balanced_accuracy']:.4f} ({'ok' if a else 'violated'}); "
        f"NMSE cls {cls['nmse_avg']:.4f}, reg {reg['nmse_avg']:.4f}"
    )
    assert verdict(6, a and b and c, detail)


def test_7_metric_identities(verdict):
    s = SystemScenario.default()
    demands = generate_demands(default_demand_params(3), s.geometry, 400)
    labels = label_dataset(demands, s)
    bad = set(labels.infeasible)
    kept = [d for d in demands if d.sample_id not in bad]
    oracle = evaluate(oracle_records(kept, labels), s.c_max)
    own = np.mean([np.sum((a.offered - d.requested) ** 2) / np.sum(d.requested**2) for a, d in zip(labels.assignments, kept)])
    # Random predictions give a non-trivial confusion for theta >= recall.
    rng = np.random.default_rng(0)
    scrambled = []
    for r in oracle_records(kept, labels):
        j = int(rng.integers(len(kept)))
        if rng.random() < 0.5:
            r = EvalRecord(r.sample_id, r.true_class, int(labels.class_ids[j]), r.requested, labels.assignments[j].offered)
        scrambled.append(r)
    rep = evaluate(scrambled, s.c_max)
    theta_ok = all(rep.flexible_accuracy[c] >= rep.recall[c] for c in rep.classes)
    ok = oracle.balanced_accuracy == 1.0 and abs(oracle.nmse_avg - own) <= 1e-12 and theta_ok
    assert verdict(
        7, ok, f"oracle balanced accuracy {oracle.balanced_accuracy}, NMSE gap {abs(oracle.nmse_avg - own):.1e}, theta >= recall {theta_ok}"
    )


def test_8_determinism(tmp_path, verdict):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"out": "run", "n_samples": 300, "seed": 1, "train": {"epochs": 20}}))
    products = ("demands.csv", "labels.csv", "model_cls.json", "model_reg.json", "report_reg.json", "classes_reg.csv", "beams_reg.csv")
    runs = []
    for name in ("a", "b"):
        for argv in (("gen",), ("label",), ("train", "--head", "cls"), ("train", "--head", "reg"), ("eval", "--head", "reg")):
            assert main([argv[0], "--manifest", str(m), "--out", name, *argv[1:]]) == 0
        runs.append({f: (tmp_path / name / f).read_bytes() for f in products})
    same = [f for f in products if runs[0][f] == runs[1][f]]
    assert verdict(8, len(same) == len(products), f"{len(same)}/{len(products)} products byte-identical")
