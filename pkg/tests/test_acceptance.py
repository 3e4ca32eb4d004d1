"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line with its measured detail. Budgets and tolerances are pinned here.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.
"""

import contextlib
import io
import time
import tracemalloc

import numpy as np
import pytest

from ovfuse import (
    ClassTable,
    ConfusionMatrix,
    FormatError,
    FusionConfig,
    HeadBundle,
    InstanceRecord,
    LabelMap,
    PromptRecord,
    CategoryRecord,
    TruncatedError,
    ValidationError,
    accumulate,
    apply_presence,
    fuse_dual_head,
    label_argmax,
    miou,
    plan_tiles,
    read_bundle,
    run_pipeline,
    stitch_labels,
    write_bundle,
)
from ovfuse.interchange import IGNORE_INDEX
from ovfuse.metrics import iou_per_class
from ovfuse.reference import reference_pipeline
from ovfuse.rng import CounterRng
from ovfuse.synth import ablation_scenario, random_bundle, random_case
from ovfuse.tiling import coverage_counts, crop_bundle

import fuzz_helpers


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_oracle_equivalence_200_seeds_three_thread_counts():
    with criterion("oracle-equivalence"):
        t0 = time.perf_counter()
        for seed in range(200):
            bundle, classes, config = random_case(
                seed, max_hw=64, max_categories=12, max_prompts=3, max_instances=8
            )
            expected = reference_pipeline(bundle, classes, config)
            for threads in (1, 4, 8):
                got = run_pipeline(bundle, classes, config, threads=threads)
                assert got == expected, (
                    f"seed {seed} threads {threads}: engine diverged from reference"
                )
        elapsed = time.perf_counter() - t0
        print(f"  200 bundles x 3 thread counts, exact match, {elapsed:.1f}s", end=" ")
        assert elapsed < 60.0, f"runtime budget exceeded: {elapsed:.1f}s"


def test_equation_unit_suite():
    with criterion("equation-unit-suite"):
        rng = CounterRng(0xE0)
        m = rng.fill_f32(64).reshape(8, 8)

        # max-fusion idempotence
        assert np.array_equal(fuse_dual_head(m, m.copy()), m)

        # zero-presence suppression
        assert not apply_presence(m, 0.0, True).any()

        # tau backgrounding (strict comparison)
        classes = ClassTable(("a", "b", "background"), background_index=2)
        maps = [np.full((1, 1), 0.8, np.float32), np.full((1, 1), 0.3, np.float32)]
        assert label_argmax(maps, classes, 0.9).labels[0, 0] == 2
        assert label_argmax(maps, classes, 0.8).labels[0, 0] == 0

        # lowest-index tie-break
        tie = [np.full((1, 1), 0.5, np.float32)] * 2
        assert label_argmax(tie, ClassTable(("a", "b")), 0.1).labels[0, 0] == 0

        # uniform-gating argmax invariance (exact power-of-two gates)
        maps = [rng.fill_f32(64).reshape(8, 8) for _ in range(4)]
        free = ClassTable(("a", "b", "c", "d"))
        before = label_argmax(maps, free, 0.0)
        for sigma in (0.5, 0.25, 1.0):
            gated = [apply_presence(x, sigma, True) for x in maps]
            assert label_argmax(gated, free, 0.0) == before


def test_ablation_structure_seeds_1_to_10():
    with criterion("ablation-structure"):
        margins = []
        for seed in range(1, 11):
            s = ablation_scenario(seed)
            scores = {}
            for key, bundle in (
                ("fused", s.full),
                ("instance", s.instance_only),
                ("semantic", s.semantic_only),
            ):
                pred = run_pipeline(bundle, s.classes, s.config)
                cm = accumulate(ConfusionMatrix(len(s.classes.names)), pred, s.truth)
                scores[key] = miou(cm)
            assert scores["fused"] > scores["instance"], f"seed {seed}: {scores}"
            assert scores["fused"] > scores["semantic"], f"seed {seed}: {scores}"
            margins.append(
                min(scores["fused"] - scores["instance"],
                    scores["fused"] - scores["semantic"])
            )
        print(f"  min fused-minus-best-head margin {min(margins):.3f}", end=" ")


def test_metrics_match_naive_tally_on_100_fixtures():
    with criterion("metrics-oracle"):
        rng = CounterRng(0x3E7)
        for case in range(100):
            n_class = rng.next_int(2, 6)
            h, w = rng.next_int(1, 12), rng.next_int(1, 12)

            def draw():
                vals = (rng.fill_f32(h * w) * n_class).astype(np.uint16)
                ignore = rng.fill_f32(h * w) < 0.15
                return LabelMap(np.where(ignore, IGNORE_INDEX, vals).reshape(h, w))

            pred, true = draw(), draw()
            cm = accumulate(ConfusionMatrix(n_class), pred, true)

            counts = np.zeros((n_class, n_class), np.uint64)
            for y in range(h):
                for x in range(w):
                    t, p = int(true.labels[y, x]), int(pred.labels[y, x])
                    if t == IGNORE_INDEX or p == IGNORE_INDEX:
                        continue
                    counts[t, p] += 1
            assert np.array_equal(cm.counts, counts), f"case {case}"
            for c, got in iou_per_class(cm):
                tp = int(counts[c, c])
                union = int(counts[c].sum() + counts[:, c].sum()) - tp
                want = None if union == 0 else tp / union
                assert got == want

        # batch additivity
        rng = CounterRng(0xADD)
        pa = LabelMap((rng.fill_f32(24) * 3).astype(np.uint16).reshape(4, 6))
        ta = LabelMap((rng.fill_f32(24) * 3).astype(np.uint16).reshape(4, 6))
        pb = LabelMap((rng.fill_f32(24) * 3).astype(np.uint16).reshape(4, 6))
        tb = LabelMap((rng.fill_f32(24) * 3).astype(np.uint16).reshape(4, 6))
        split = ConfusionMatrix(3)
        accumulate(split, pa, ta)
        accumulate(split, pb, tb)
        joined = accumulate(
            ConfusionMatrix(3),
            LabelMap(np.vstack([pa.labels, pb.labels])),
            LabelMap(np.vstack([ta.labels, tb.labels])),
        )
        assert np.array_equal(split.counts, joined.counts)

        # ignore neutrality
        true = LabelMap(np.asarray([[0, IGNORE_INDEX], [1, IGNORE_INDEX]], np.uint16))
        pred_a = LabelMap(np.asarray([[0, 0], [1, 1]], np.uint16))
        pred_b = LabelMap(np.asarray([[0, 2], [1, 0]], np.uint16))
        a = accumulate(ConfusionMatrix(3), pred_a, true)
        b = accumulate(ConfusionMatrix(3), pred_b, true)
        assert np.array_equal(a.counts, b.counts)


def test_format_robustness_10000_fuzz_cases():
    with criterion("format-robustness"):
        corpus = fuzz_helpers.base_corpus(40)

        # all valid round-trips are bit-exact
        for seed in range(40):
            bundle, _ = random_bundle(seed, max_hw=10, max_categories=4,
                                      max_prompts=2, max_instances=3)
            buf = io.BytesIO()
            write_bundle(bundle, buf)
            assert buf.getvalue() == corpus[seed]
            assert read_bundle(buf.getvalue()) == bundle

        rng = CounterRng(0xF022)
        accepted = rejected = 0
        t0 = time.perf_counter()
        for case in range(10_000):
            data = fuzz_helpers.mutate(corpus[case % len(corpus)], rng)
            try:
                bundle = read_bundle(data)
            except (FormatError, ValidationError, TruncatedError):
                rejected += 1
                continue
            fuzz_helpers.assert_bundle_sane(bundle)
            accepted += 1
        elapsed = time.perf_counter() - t0
        print(f"  {rejected} rejected / {accepted} accepted-sane in {elapsed:.1f}s", end=" ")
        assert rejected + accepted == 10_000
        assert rejected > 5_000  # the mutator is doing real damage


def test_tiling_coverage_stitching_and_10k_memory():
    with criterion("tiling"):
        # brute-force coverage on 50 random geometries
        rng = CounterRng(0x7117)
        for _ in range(50):
            h, w = rng.next_int(1, 400), rng.next_int(1, 400)
            tile = rng.next_int(1, 96)
            overlap = rng.next_int(0, tile - 1)
            grid = plan_tiles(h, w, tile, overlap)
            counts = coverage_counts(grid)
            assert (counts >= 1).all()
            if overlap == 0:
                assert (counts == 1).all()
            for x0, y0, x1, y1 in grid.tiles:
                assert x1 - x0 <= tile and y1 - y0 <= tile

        # disjoint-tile processing equals whole-canvas processing bit-exactly
        for seed in (3, 14, 15):
            bundle, classes, config = random_case(seed, max_hw=48, max_categories=5,
                                                  max_prompts=2, max_instances=4)
            whole = run_pipeline(bundle, classes, config)
            grid = plan_tiles(bundle.height, bundle.width, 17, 0)
            tiles = (
                run_pipeline(crop_bundle(bundle, win), classes, config)
                for win in grid.tiles
            )
            assert stitch_labels(grid, tiles) == whole

        # 10k x 10k stitch: peak memory <= canvas + 2 tile stacks (+ slack)
        side, tile = 10_000, 1008
        grid = plan_tiles(side, side, tile, 0)

        def synthetic_tiles():
            for i, (x0, y0, x1, y1) in enumerate(grid.tiles):
                block = (np.arange((y1 - y0) * (x1 - x0), dtype=np.uint32) + i) % 7
                yield LabelMap(block.astype(np.uint16).reshape(y1 - y0, x1 - x0))

        canvas_bytes = side * side * 2
        tile_bytes = tile * tile * 2
        tracemalloc.start()
        t0 = time.perf_counter()
        out = stitch_labels(grid, synthetic_tiles())
        elapsed = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert out.labels.shape == (side, side)
        budget = canvas_bytes + 2 * tile_bytes + 32 * 2**20
        print(
            f"  10k stitch peak {peak / 2**20:.0f} MiB "
            f"(budget {budget / 2**20:.0f} MiB) in {elapsed:.1f}s", end=" "
        )
        assert peak <= budget, f"peak {peak} exceeds budget {budget}"
        assert elapsed < 120.0


def test_throughput_single_tile_under_one_second():
    with criterion("throughput"):
        h = w = 1008
        rng = CounterRng(0x97)
        block = rng.fill_f32(144 * 144).reshape(144, 144)

        def big_map(shift):
            return np.ascontiguousarray(
                np.roll(np.tile(block, (7, 7)), shift, axis=1)
            )

        categories = []
        for ci in range(12):
            instances = [
                InstanceRecord(float(0.5 + 0.05 * k), big_map(ci * 13 + k), None)
                for k in range(10)
            ]
            categories.append(
                CategoryRecord(
                    f"cat{ci:02d}",
                    [PromptRecord(f"cat{ci:02d}", 0.9, big_map(ci * 31), instances)],
                )
            )
        bundle = HeadBundle("throughput", h, w, categories)
        classes = ClassTable(tuple(f"cat{ci:02d}" for ci in range(12)) + ("background",),
                             background_index=12)
        config = FusionConfig(tau=0.4, instance_conf_threshold=0.55)

        run_pipeline(bundle, classes, config, threads=1)  # warm the caches
        t0 = time.perf_counter()
        out = run_pipeline(bundle, classes, config, threads=1)
        elapsed = time.perf_counter() - t0
        print(f"  1008x1008, 12 cats x (1 sem + 10 inst): {elapsed * 1000:.0f} ms", end=" ")
        assert out.labels.shape == (h, w)
        assert elapsed < 1.0, f"{elapsed:.2f}s exceeds the 1 s budget"
