"""Image loading/saving and dataset manifest handling.

Images are H x W x 3 float32 arrays in [0, 1]. PNG (8/16-bit RGB) goes
through OpenCV; PPM (P6) is parsed directly. Manifests are line-delimited
JSON: a header record followed by one scene record per line.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import DataError
from .synthesis import DegradationParams

MANIFEST_KIND = "triplet-manifest"
MANIFEST_VERSION = 1


def load_image(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image not found: {path}")
    if path.suffix.lower() in (".ppm", ".pnm"):
        return _load_ppm(path)
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise DataError(f"malformed or unsupported image: {path}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected 3-channel RGB image, got shape {arr.shape}: {path}")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DataError(f"unsupported bit depth {arr.dtype}: {path}")
    rgb = arr[:, :, ::-1].astype(np.float32) / np.float32(scale)
    return np.ascontiguousarray(rgb)


def load_mask(path):
    """Single-channel mask image as H x W float32 in [0, 1]; RGB masks use
    their first channel."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"mask not found: {path}")
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise DataError(f"malformed or unsupported mask image: {path}")
    if arr.ndim == 3:
        # cv2 loads color as BGR; use the red plane (equal to the others for
        # gray content), or the lone plane of (H, W, 1) layouts
        arr = arr[:, :, 0] if arr.shape[2] == 1 else arr[:, :, 2]
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DataError(f"unsupported mask bit depth {arr.dtype}: {path}")
    return np.ascontiguousarray(arr.astype(np.float32) / np.float32(scale))


def _load_ppm(path):
    data = path.read_bytes()
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            ch = data[pos:pos + 1]
            if ch == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"truncated PPM header: {path}")
        return data[start:pos]

    magic = token()
    if magic != b"P6":
        raise DataError(f"not a P6 PPM file: {path}")
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError:
        raise DataError(f"malformed PPM header: {path}") from None
    if maxval not in (255, 65535):
        raise DataError(f"unsupported PPM maxval {maxval}: {path}")
    pos += 1  # single whitespace byte after maxval
    bytes_per = 1 if maxval == 255 else 2
    need = width * height * 3 * bytes_per
    raw = data[pos:pos + need]
    if len(raw) != need:
        raise DataError(f"truncated PPM pixel data: {path}")
    if maxval == 255:
        samples = np.frombuffer(raw, dtype=np.uint8)
    else:
        samples = np.frombuffer(raw, dtype=">u2")
    img = samples.reshape(height, width, 3).astype(np.float32) / np.float32(maxval)
    return np.ascontiguousarray(img)


def _quantize(img):
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"save_image expects H x W x 3 data, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("save_image got non-finite samples")
    clamped = np.clip(arr, 0.0, 1.0)
    # round half away from zero; samples are non-negative after the clamp
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def save_image(img, path):
    path = Path(path)
    q = _quantize(img)
    if path.suffix.lower() in (".ppm", ".pnm"):
        try:
            with open(path, "wb") as fh:
                fh.write(b"P6\n%d %d\n255\n" % (q.shape[1], q.shape[0]))
                fh.write(q.tobytes())
        except OSError as exc:
            raise DataError(f"cannot write image: {path}: {exc}") from None
        return
    ok = cv2.imwrite(str(path), np.ascontiguousarray(q[:, :, ::-1]))
    if not ok:
        raise DataError(f"cannot write image: {path}")


@dataclass
class SceneEntry:
    scene: str
    gt: list
    low: list = None
    params: list = None  # DegradationParams per view, when synthesized


@dataclass
class TripletManifest:
    split: str
    entries: list = field(default_factory=list)
    root: str = "."
    base_dir: Path = None  # set on load; resolves relative paths

    def resolve(self, rel):
        base = Path(self.base_dir) if self.base_dir is not None else Path(".")
        return base / self.root / rel


def _entry_error(i, fieldname, msg):
    return DataError(f"manifest entries[{i}].{fieldname}: {msg}")


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"empty manifest: {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest header is not valid JSON: {exc}") from None
    if header.get("kind") != MANIFEST_KIND:
        raise DataError(f"manifest kind: expected '{MANIFEST_KIND}', got {header.get('kind')!r}")
    if header.get("version") != MANIFEST_VERSION:
        raise DataError(f"manifest version: unsupported {header.get('version')!r}")
    split = header.get("split")
    if split not in ("train", "test"):
        raise DataError(f"manifest split: must be 'train' or 'test', got {split!r}")
    manifest = TripletManifest(split=split, root=header.get("root", "."),
                               base_dir=path.parent)
    seen = set()
    for i, line in enumerate(lines[1:]):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest entries[{i}]: invalid JSON: {exc}") from None
        scene = rec.get("scene")
        if not isinstance(scene, str) or not scene:
            raise _entry_error(i, "scene", "must be a non-empty string")
        if scene in seen:
            raise _entry_error(i, "scene", f"duplicate scene id '{scene}'")
        seen.add(scene)
        gt = rec.get("gt")
        if not isinstance(gt, list) or len(gt) != 3:
            raise _entry_error(i, "gt", "exactly three views required")
        low = rec.get("low")
        if low is not None and (not isinstance(low, list) or len(low) != 3):
            raise _entry_error(i, "low", "exactly three views required")
        params = rec.get("params")
        if params is not None:
            if not isinstance(params, list) or len(params) != 3:
                raise _entry_error(i, "params", "exactly three per-view records required")
            params = [DegradationParams.from_dict(p) for p in params]
        entry = SceneEntry(scene=scene, gt=gt, low=low, params=params)
        for kind in ("gt", "low"):
            paths = getattr(entry, kind)
            if paths is None:
                continue
            for p in paths:
                if not manifest.resolve(p).is_file():
                    raise _entry_error(i, kind, f"referenced file missing: {p}")
        manifest.entries.append(entry)
    return manifest


def write_manifest(manifest, path):
    path = Path(path)
    header = {"kind": MANIFEST_KIND, "version": MANIFEST_VERSION,
              "split": manifest.split, "root": manifest.root}
    lines = [json.dumps(header)]
    for e in manifest.entries:
        rec = {"scene": e.scene, "gt": list(e.gt)}
        rec["low"] = list(e.low) if e.low is not None else None
        rec["params"] = [p.to_dict() for p in e.params] if e.params is not None else None
        lines.append(json.dumps(rec))
    path.write_text("\n".join(lines) + "\n")
