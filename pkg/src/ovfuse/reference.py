"""Brute-force reference pipeline: the correctness oracle for the engine.

Everything here is a literal per-pixel loop: instance crops are first
materialized as dense rasters (pixels outside the bbox are zero by
definition), then each pixel independently takes the max of the
confidence-weighted instance values and the semantic value, is gated by
presence, reduced across prompts, and finally labeled by a scanning
argmax. No tiling, no parallelism, no algebraic shortcuts. The loops are
compiled with numba so the randomized equivalence suites stay fast, but
the arithmetic is the same IEEE float32 sequence a hand interpreter would
produce.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .fusion import FusionConfig, check_vocabulary
from .interchange import ClassTable, HeadBundle, LabelMap


@njit(cache=True)
def _prompt_map_loop(sem, has_sem, inst_vals, keep, confs, presence, gating, out):
    h, w = out.shape
    k = confs.shape[0]
    for y in range(h):
        for x in range(w):
            m = np.float32(0.0)
            if has_sem:
                m = sem[y, x]
            for i in range(k):
                if keep[i]:
                    v = inst_vals[i, y, x] * confs[i]
                    if v > m:
                        m = v
            if gating:
                m = m * presence
            out[y, x] = m


@njit(cache=True)
def _max_into_loop(acc, m):
    h, w = acc.shape
    for y in range(h):
        for x in range(w):
            if m[y, x] > acc[y, x]:
                acc[y, x] = m[y, x]


@njit(cache=True)
def _argmax_loop(stack, index_of, has_bg, bg_index, tau, labels):
    c, h, w = stack.shape
    for y in range(h):
        for x in range(w):
            best = stack[0, y, x]
            bi = 0
            for ci in range(1, c):
                v = stack[ci, y, x]
                if v > best:  # strict: ties keep the lowest index
                    best = v
                    bi = ci
            lab = index_of[bi]
            if has_bg and best < tau:
                lab = bg_index
            labels[y, x] = lab


def reference_pipeline(
    bundle: HeadBundle, classes: ClassTable, config: FusionConfig
) -> LabelMap:
    """Semantically identical to run_pipeline, computed the slow plain way."""
    names = check_vocabulary(bundle, classes)
    by_name = {c.name: c for c in bundle.categories}
    h, w = bundle.height, bundle.width
    non_bg = classes.non_background()

    stack = np.zeros((len(names), h, w), dtype=np.float32)
    for ci, name in enumerate(names):
        cat = by_name[name]
        acc = None
        for prompt in cat.prompts:
            if prompt.semantic_map is None:
                sem = np.zeros((h, w), dtype=np.float32)
                has_sem = False
            else:
                sem = np.ascontiguousarray(prompt.semantic_map, dtype=np.float32)
                has_sem = True
            k = len(prompt.instances)
            inst_vals = np.zeros((k, h, w), dtype=np.float32)
            confs = np.zeros(k, dtype=np.float32)
            keep = np.zeros(k, dtype=np.bool_)
            for i, inst in enumerate(prompt.instances):
                inst_vals[i] = inst.to_dense(h, w)
                confs[i] = np.float32(inst.confidence)
                keep[i] = inst.confidence >= config.instance_conf_threshold
            out = np.zeros((h, w), dtype=np.float32)
            _prompt_map_loop(
                sem,
                has_sem,
                inst_vals,
                keep,
                confs,
                np.float32(prompt.presence),
                config.presence_gating,
                out,
            )
            if acc is None:
                acc = out
            else:
                _max_into_loop(acc, out)
        stack[ci] = acc

    index_of = np.asarray([i for i, _ in non_bg], dtype=np.uint16)
    has_bg = classes.background_index is not None
    bg_index = np.uint16(classes.background_index if has_bg else 0)
    labels = np.zeros((h, w), dtype=np.uint16)
    _argmax_loop(stack, index_of, has_bg, bg_index, np.float32(config.tau), labels)
    return LabelMap(labels)
