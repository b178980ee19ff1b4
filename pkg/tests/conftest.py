"""Shared fixtures: procedural multi-view scenes and an on-disk toy dataset."""

import numpy as np
import pytest

from mvenhance.image_io import SceneEntry, TripletManifest, save_image, write_manifest
from mvenhance.synthesis import synth_triplet

VIEW_SHIFTS = ((0, 0), (5, 3), (9, 6))


def make_canvas(rng, size):
    """Structured synthetic scene: smooth shading plus rectangles and disks."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((size, size, 3), dtype=np.float32)
    for c in range(3):
        fy, fx = rng.uniform(0.5, 2.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        img[:, :, c] = 0.5 + 0.25 * np.sin(
            2 * np.pi * (fy * yy + fx * xx) / size + phase)
    for _ in range(6):
        y0, x0 = rng.integers(0, size - 8, 2)
        h, w = rng.integers(6, size // 3, 2)
        color = rng.uniform(0.15, 0.95, 3)
        img[y0:y0 + h, x0:x0 + w] = 0.6 * img[y0:y0 + h, x0:x0 + w] + 0.4 * color
    for _ in range(4):
        cy, cx = rng.integers(8, size - 8, 2)
        rad = int(rng.integers(4, size // 5))
        color = rng.uniform(0.15, 0.95, 3)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad
        img[mask] = 0.5 * img[mask] + 0.5 * color
    return np.clip(img, 0.02, 0.98).astype(np.float32)


def make_scene_views(rng, view=64, shifts=VIEW_SHIFTS):
    """Three ground-truth views of one scene as shifted crops of a canvas."""
    margin = max(max(s) for s in shifts)
    canvas = make_canvas(rng, view + margin)
    return [np.ascontiguousarray(canvas[dy:dy + view, dx:dx + view])
            for dy, dx in shifts]


def build_dataset(tmp_path, n_scenes, seed=0, view=64, split="train"):
    """Synthesized triplets on disk plus their manifest; returns manifest path."""
    rng = np.random.default_rng(seed)
    root = tmp_path / split
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in range(n_scenes):
        gts = make_scene_views(rng, view=view)
        lows, params = synth_triplet(gts, rng)
        gt_paths, low_paths = [], []
        for v in range(3):
            gp = f"scene{s:03d}_gt{v + 1}.png"
            lp = f"scene{s:03d}_low{v + 1}.png"
            save_image(gts[v], root / gp)
            save_image(lows[v], root / lp)
            gt_paths.append(gp)
            low_paths.append(lp)
        entries.append(SceneEntry(scene=f"scene{s:03d}", gt=gt_paths,
                                  low=low_paths, params=params))
    manifest = TripletManifest(split=split, entries=entries, root=".")
    path = root / "manifest.jsonl"
    write_manifest(manifest, path)
    return path


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    base = tmp_path_factory.mktemp("toyset")
    return build_dataset(base, n_scenes=3, seed=11)
