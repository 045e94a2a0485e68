"""End-to-end acceptance checks, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import dataclasses
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from doorsom import som
from doorsom.canny import canny, sobel_gradients, thinness_violations
from doorsom.doorfeat import find_post_candidates, raw_features
from doorsom.imgcore import gaussian_blur
from doorsom.linefit import LineSegment, detect_lines, merge_segments, point_line_distance, split_indices, track_edge_chains
from doorsom.pipeline import (
    ModelFormatError,
    PipelineConfig,
    bench,
    dump_model,
    evaluate_corpus,
    fit_model,
    load_model,
)
from doorsom.synthcorpus import CATEGORIES, generate_corpus, generate_specs, render_scene

from conftest import step_image
from test_linefit import random_polyline_map
from test_som import three_clusters

criterion = pytest.mark.criterion


def exact_bmu(weights, x):
    """Row-major first argmin of exact rational squared distances."""
    xs = [Fraction(float(v)) for v in x]
    best, arg = None, None
    for i in range(weights.shape[0]):
        for j in range(weights.shape[1]):
            d = sum((xs[k] - Fraction(float(weights[i, j, k]))) ** 2 for k in range(len(xs)))
            if best is None or d < best:
                best, arg = d, (i, j)
    return arg


@criterion(1, "BMU oracle")
def test_bmu_oracle():
    rng = np.random.default_rng(2024)
    cases = []
    for k in range(1000):
        r, c, d = (int(v) for v in rng.integers(1, [13, 13, 17]))
        if k % 2:
            # coarse dyadic grid: many exact ties, every distance exact in floating point
            w = rng.integers(0, 4, (r, c, d)) / 4.0
            x = rng.integers(0, 4, d) / 4.0
        else:
            w = rng.random((r, c, d))
            x = rng.random(d)
            if k % 4 == 0:
                w[rng.integers(r), rng.integers(c)] = w[0, 0]
                w[-1, -1] = w[0, 0]
        cases.append((som.SomLattice(w), w, x))
    t0 = time.perf_counter()
    got = [som.best_matching_unit(l, x) for l, _, x in cases]
    elapsed = time.perf_counter() - t0
    want = [exact_bmu(w, x) for _, w, x in cases]
    assert got == want
    assert elapsed < 5.0


@criterion(2, "update arithmetic")
def test_update_arithmetic():
    l = som.SomLattice(np.array([[[0.5]]]))
    som.train_step(l, [1.0], 0.12, 1.0, 1.0)
    assert abs(l.weights[0, 0, 0] - 0.56) <= 1e-12

    # node (2, 4) sits at grid distance 2 = sigma from the BMU (2, 2)
    sigma = 2.0
    l = som.SomLattice(np.zeros((5, 5, 2)))
    l.weights[2, 2] = [0.9, 0.9]
    x = np.array([1.0, 1.0])
    before = l.weights.copy()
    assert som.train_step(l, x, 0.1, sigma, 1.0) == (2, 2)
    rel = (l.weights - before) / (x - before)
    assert abs(rel[2, 2, 0] - 0.1) <= 1e-12
    assert abs(rel[2, 4, 0] / rel[2, 2, 0] - math.exp(-1.0)) <= 1e-12
    assert abs(rel[0, 2, 1] / rel[2, 2, 1] - math.exp(-1.0)) <= 1e-12


@criterion(3, "geometric convergence")
def test_geometric_convergence():
    eta = 0.12
    l = som.init_lattice(6, 6, 11, 3)
    x = np.random.default_rng(3).random(11)
    bmu = som.best_matching_unit(l, x)
    err = np.linalg.norm(l.weights[bmu] - x)
    for _ in range(100):
        assert som.train_step(l, x, eta, 1e-6) == bmu
        new = np.linalg.norm(l.weights[bmu] - x)
        assert abs(new - (1 - eta) * err) <= 1e-9
        err = new


@criterion(4, "schedule properties")
def test_schedule_properties():
    s = som.TrainSchedule()
    seq = [som.schedule_at(s, n) for n in range(s.total_iters)]
    assert seq[0] == (0.12, 4.0)
    for (e0, s0), (e1, s1) in zip(seq[:-1], seq[1:]):
        assert e1 <= e0 and s1 <= s0
    conv = seq[math.ceil(s.order_iters):]
    assert conv and all(e == 0.001 for e, _ in conv)


@criterion(5, "cluster training error curve")
@pytest.mark.parametrize("seed", range(5))
def test_cluster_training(seed):
    data = three_clusters(seed)
    t0 = time.perf_counter()
    _, curve = som.train(som.init_lattice(8, 8, 2, seed), data, som.TrainSchedule(), seed)
    elapsed = time.perf_counter() - t0
    assert curve.iterations[-1] == 6272
    assert curve.quantization[-1] < 0.25 * curve.quantization[0]
    text = curve.format().splitlines()
    assert len(text) == len(curve.iterations) + 1
    assert elapsed < 10.0


@criterion(6, "canny localization")
def test_canny_localization():
    rows = good = violations = 0
    for seed in range(20):
        img = step_image(80, 60, 40, 80, 180, noise=10, seed=seed)
        e = canny(img)
        violations += thinness_violations(e, sobel_gradients(gaussian_blur(img, 1.4)))
        for row in e.edge[2:-2]:
            cols = np.flatnonzero(row[2:-2]) + 2
            rows += 1
            # the step between columns 39 and 40 is reported on its left pixel
            good += len(cols) > 0 and bool(np.all(np.abs(cols - 39) <= 1))
    assert good / rows >= 0.99
    assert violations == 0


@criterion(7, "line-fit soundness")
def test_linefit_soundness():
    rng = np.random.default_rng(77)
    dev_tol = 2.0
    for _ in range(200):
        em = random_polyline_map(rng)
        chains = track_edge_chains(em)
        pts = [p for c in chains for p in c.points]
        assert len(pts) == len(set(pts)) == em.count()
        segs = []
        for c in chains:
            for i, j in split_indices(c.points, dev_tol):
                a, b = c.points[i], c.points[j]
                assert all(point_line_distance(p, a, b) <= dev_tol for p in c.points[i : j + 1])
                if a != b:
                    segs.append(LineSegment(*map(float, a + b)))
        once = merge_segments(segs, 0.05, 5.0)
        assert merge_segments(once, 0.05, 5.0) == once


def _feature_specs():
    specs = generate_specs(17, 0)
    picked = [s for s in specs if s.category != "shadow"] + [s for s in specs if s.category == "shadow"][:16]
    return [dataclasses.replace(s, noise=0.0) for s in picked]


@criterion(8, "feature recovery")
def test_feature_recovery():
    specs = _feature_specs()
    assert len(specs) == 50
    assert {s.category for s in specs} == set(CATEGORIES)
    assert {s.gap_polarity for s in specs} == {"dark", "bright"}
    failures = []
    for s in specs:
        assert 2 <= s.concavity <= 10
        img, truth = render_scene(s)
        d = truth.door
        cands = [c for c in find_post_candidates(detect_lines(canny(img)), img)
                 if abs(c.post_x()[0] - (d.x_left - 1)) <= 2 and abs(c.post_x()[1] - (d.x_right - 1)) <= 2]
        if not cands:
            failures.append((s.category, "no candidate on the door posts"))
            continue
        f = raw_features(cands[0], img)
        sign = -1 if s.gap_polarity == "dark" else 1
        if f.concavity is None or abs(f.concavity - s.concavity) > 1:
            failures.append((s.category, "concavity", s.concavity, f.concavity))
        if abs(f.post_distance - d.width) > 2:
            failures.append((s.category, "post distance", d.width, f.post_distance))
        if f.gap is None or f.gap.polarity != sign or f.gap.contrast <= 0:
            failures.append((s.category, "gap polarity", s.gap_polarity))
    assert failures == []


@pytest.fixture(scope="module")
def end_to_end():
    t0 = time.perf_counter()
    train = generate_corpus(100, 1)
    held_out = generate_corpus(100, 2)
    out = fit_model(train, PipelineConfig(), seed=7)
    report = evaluate_corpus(out.model, held_out)
    return out, report, time.perf_counter() - t0, held_out


@criterion(9, "end-to-end detection rate")
@pytest.mark.slow
def test_end_to_end(end_to_end):
    out, report, elapsed, held_out = end_to_end
    assert out.n_images == 300 and len(held_out) == 300
    print()
    print(report.format(), end="")
    for cat in CATEGORIES:
        row = report.row(cat)
        assert row.images == 100
        assert row.accuracy >= 90.0, f"{cat}: {row.accuracy:.2f}%"
    assert elapsed < 300.0


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="features cap 1-NN leave-one-out near 95%; the 8x8 map reaches about 92-93%")
def test_self_calibration_accuracy(end_to_end):
    out = end_to_end[0]
    assert out.train_accuracy >= 0.95, f"{out.train_accuracy:.4f}"


@criterion(10, "classification timing")
@pytest.mark.slow
def test_classification_timing(end_to_end):
    out, _, _, held_out = end_to_end
    model = out.model
    assert (model.lattice.rows, model.lattice.cols, model.lattice.dim) == (8, 8, 11)
    rep = bench(model, held_out[0].image, classify_reps=1000, step_reps=100, train_reps=1, stage_reps=1)
    print()
    print(rep.format(), end="")
    assert rep.classification < 1e-3


@criterion(11, "determinism and persistence")
def test_determinism_and_persistence(small_corpus):
    a = fit_model(small_corpus, PipelineConfig(), seed=5).model
    b = fit_model(generate_corpus(6, 3), PipelineConfig(), seed=5).model
    buf = dump_model(a)
    assert buf == dump_model(b)
    assert dump_model(load_model(buf)) == buf
    corrupt = {
        "magic": b"XOMDOOR1" + buf[8:],
        "format_version": buf[:8] + (2).to_bytes(4, "little") + buf[12:],
        "weights": buf[:200],
        "labels": buf[: 24 + 8 * 704 + 10],
        "trailer": buf + b"junk",
    }
    for field, data in corrupt.items():
        with pytest.raises(ModelFormatError) as e:
            load_model(data)
        assert e.value.field == field
        assert str(e.value).startswith(field + ":")
