"""The multi-view enhancement network.

A shared convolutional encoder feeds T cascaded units; each unit runs
per-view residual attention enhancement, predicts an intermediate image from
the primary features (supervised at every stage), aligns all three views
onto the primary by windowed patch search, and fuses the aligned stacks with
learned weights. Each view's best-match patches are routed into the next
unit's spatial attention. A single conv head maps the final fused features
to the restored image.

Weight layout notes:
  - Every unit owns its parameters; within a unit the per-view enhancement
    weights are shared across views.
  - First-layer blocks consuming the two auxiliary views are initialized
    identically, so swapping the auxiliary inputs leaves the output unchanged
    at initialization (training then breaks the symmetry).
  - The patch search itself is an index selection: gradients flow through
    gathered patch values, never through indices.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import alignment
from .engine import conv as C
from .engine import tensor as T
from .errors import ContractError, DataError, DimensionError

MIN_SIDE = 16


@dataclass
class ModelConfig:
    channels: int = 16
    units: int = 3
    top_k: int = 4
    patch: int = 7
    radius: int = 2
    se_reduction: int = 4
    encoder_depth: int = 3
    use_intra: bool = True
    use_inter: bool = True
    use_e2a: bool = True
    use_a2e: bool = True

    def validate(self):
        if self.units < 1:
            raise DataError("model config: units must be >= 1")
        if self.top_k < 1:
            raise DataError("model config: top_k must be >= 1")
        if self.channels < 1 or self.channels % self.se_reduction:
            raise DataError("model config: channels must be divisible by se_reduction")
        if self.patch < 1:
            raise DataError("model config: patch must be >= 1")
        if self.radius < 0:
            raise DataError("model config: radius must be >= 0")
        if self.encoder_depth < 1:
            raise DataError("model config: encoder_depth must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"model config: unknown keys {sorted(unknown)}")
        return cls(**d).validate()

    def spatial_in(self, t):
        a2e_feed = t > 0 and self.use_a2e and self.use_inter
        return self.channels * 4 if a2e_feed else self.channels


class ModelParams:
    """Named, versioned collection of every learnable tensor."""

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def as_arrays(self):
        return {name: t.data for name, t in self.tensors.items()}

    @classmethod
    def from_arrays(cls, config, arrays, dtype=np.float32):
        expected = cls.initialize(config, seed=0, dtype=dtype)
        if set(arrays) != set(expected.tensors):
            missing = sorted(set(expected.tensors) - set(arrays))
            extra = sorted(set(arrays) - set(expected.tensors))
            raise DataError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        tensors = {}
        for name, ref in expected.tensors.items():
            arr = np.asarray(arrays[name], dtype=dtype)
            if arr.shape != ref.data.shape:
                raise DataError(
                    f"parameter '{name}' has shape {arr.shape}, expected {ref.data.shape}")
            tensors[name] = T.Tensor(arr, requires_grad=True, dtype=dtype)
        return cls(config, tensors)

    def astype(self, dtype):
        return ModelParams(self.config, {
            name: T.Tensor(t.data.astype(dtype), requires_grad=True, dtype=dtype)
            for name, t in self.tensors.items()})

    @classmethod
    def initialize(cls, config, seed=0, dtype=np.float32):
        config.validate()
        rng = np.random.default_rng(seed)
        c = config.channels
        k = config.top_k
        tensors = {}

        def conv_w(name, co, ci, ksize, gain=1.0):
            std = gain * np.sqrt(2.0 / (ci * ksize * ksize))
            tensors[name + ".w"] = T.Tensor(
                (std * rng.standard_normal((co, ci, ksize, ksize))).astype(dtype),
                requires_grad=True, dtype=dtype)
            tensors[name + ".b"] = T.Tensor(
                np.zeros(co, dtype=dtype), requires_grad=True, dtype=dtype)

        def dense_w(name, out_dim, in_dim):
            std = np.sqrt(2.0 / in_dim)
            tensors[name + ".w"] = T.Tensor(
                (std * rng.standard_normal((out_dim, in_dim))).astype(dtype),
                requires_grad=True, dtype=dtype)
            tensors[name + ".b"] = T.Tensor(
                np.zeros(out_dim, dtype=dtype), requires_grad=True, dtype=dtype)

        def mirror_aux_blocks(name, block, lo_start, hi_start):
            w = tensors[name + ".w"].data
            w[:, hi_start:hi_start + block] = w[:, lo_start:lo_start + block]

        for i in range(config.encoder_depth):
            conv_w(f"enc{i}", c, 3 if i == 0 else c, 3)

        for t in range(config.units):
            u = f"u{t}"
            if config.use_intra:
                conv_w(f"{u}.spatial.c1", c, config.spatial_in(t), 3)
                conv_w(f"{u}.spatial.c2", 1, c, 3)
                if config.spatial_in(t) == 4 * c:
                    # identical aux-view top-1 blocks (channels c..2c and 3c..4c)
                    mirror_aux_blocks(f"{u}.spatial.c1", c, c, 3 * c)
                dense_w(f"{u}.se.fc1", c // config.se_reduction, c)
                dense_w(f"{u}.se.fc2", c, c // config.se_reduction)
            conv_w(f"{u}.e2a", 3, c, 3)
            if config.use_inter:
                if config.use_e2a:
                    conv_w(f"{u}.cof.c1", c, 3, 3)
                    conv_w(f"{u}.cof.c2", 1, c, 3)
                block = (k + 1) * c
                conv_w(f"{u}.fuse.reduce", c, 3 * block, 1)
                mirror_aux_blocks(f"{u}.fuse.reduce", block, 0, 2 * block)
                conv_w(f"{u}.fuse.conv", c, c, 3)
                conv_w(f"{u}.wt.c1", c, 3 * c, 3)
                mirror_aux_blocks(f"{u}.wt.c1", c, 0, 2 * c)
                for j in (2, 3, 4):
                    conv_w(f"{u}.wt.c{j}", c, c, 3)
                # identity-favoring fusion: at init the fused output passes the
                # primary's own top-1 (self-match) content through, so cascaded
                # units start content-preserving instead of re-learning features
                # from scratch (plain fan-in init makes deeper cascades lose to
                # shallow ones at short schedules)
                reduce_w = tensors[f"{u}.fuse.reduce.w"].data
                for ch in range(c):
                    reduce_w[ch, block + ch, 0, 0] += 1.0
                conv_wt = tensors[f"{u}.fuse.conv.w"].data
                for ch in range(c):
                    conv_wt[ch, ch, 1, 1] += 1.0
                tensors[f"{u}.wt.c4.b"].data[:] = 2.0

        conv_w("head", 3, c, 3, gain=0.1)
        return cls(config, tensors)


@dataclass
class ForwardResult:
    restored: object            # Tensor (1, 3, H, W), unclamped
    intermediates: list         # Tensor (1, 3, H, W) per unit, unclamped
    view_order: list            # original view indices as [aux, primary, aux]
    align_records: list = None  # per unit: per view TopKMatches (when collected)


def _conv_block(params, name, x, padding=1):
    return C.conv2d(x, params[name + ".w"], params[name + ".b"], padding=padding)


def encode(params, image):
    """Shared feature extractor: conv + leaky-relu stack at full resolution."""
    x = image
    for i in range(params.config.encoder_depth):
        x = T.leaky_relu(_conv_block(params, f"enc{i}", x))
    return x


def intra_view_en(params, t, f_in, top1_prev):
    """Residual spatial+channel attention enhancement for one view."""
    cfg = params.config
    expect_top1 = cfg.spatial_in(t) == 4 * cfg.channels
    if expect_top1 != (top1_prev is not None):
        raise ContractError(f"unit {t}: routed top-1 features "
                            f"{'required' if expect_top1 else 'not accepted'}")
    sp_in = T.concat_channels([f_in, top1_prev]) if top1_prev is not None else f_in
    s = T.leaky_relu(_conv_block(params, f"u{t}.spatial.c1", sp_in))
    s = T.sigmoid(_conv_block(params, f"u{t}.spatial.c2", s))

    n, c = f_in.data.shape[0], f_in.data.shape[1]
    z = T.reshape(T.global_avg_pool(f_in), (n, c))
    z = T.relu(T.dense(z, params[f"u{t}.se.fc1.w"], params[f"u{t}.se.fc1.b"]))
    z = T.sigmoid(T.dense(z, params[f"u{t}.se.fc2.w"], params[f"u{t}.se.fc2.b"]))
    z = T.reshape(z, (n, c, 1, 1))

    return T.add(T.mul(T.mul(f_in, s), z), f_in)


def e2a_predict(params, t, f_intra_primary):
    """Single-conv intermediate image prediction; raw values (clamp on export)."""
    return _conv_block(params, f"u{t}.e2a", f_intra_primary)


def confidence_eval(params, t, image_t):
    """Per-pixel reliability of the stage prediction, in (0, 1)."""
    x = T.leaky_relu(_conv_block(params, f"u{t}.cof.c1", image_t))
    return T.sigmoid(_conv_block(params, f"u{t}.cof.c2", x))


def a2e_route(top1_views):
    """Channel-concatenate the three per-view top-1 matched feature maps."""
    if len(top1_views) != 3:
        raise DimensionError("a2e_route expects exactly three views")
    return T.concat_channels(top1_views)


def _align_one_view(cfg, src_pad, prim_grid, matches, conf_up, h, w):
    """Gather the K candidates plus the confidence-weighted average, crop back."""
    cols = prim_grid.cols
    gathered = [C.gather_patches(src_pad, matches.flat_indices(cols, i), cfg.patch)
                for i in range(cfg.top_k)]
    total = gathered[0]
    for g in gathered[1:]:
        total = T.add(total, g)
    avg = T.scale(total, 1.0 / cfg.top_k)
    if conf_up is not None:
        avg = T.mul(avg, conf_up)
    aligned = C.crop_tl(T.concat_channels(gathered + [avg]), h, w)
    top1 = C.crop_tl(gathered[0], h, w)
    return aligned, top1


def inter_view_af(params, t, f_intra, image_t, frozen=None, collect=None):
    """Align both auxiliary views and the primary itself onto the primary,
    then fuse adaptively. Returns (f_inter views, top1 per view)."""
    cfg = params.config
    n, _, h, w = f_intra[1].data.shape
    if n != 1:
        raise DimensionError("alignment operates on single-sample batches")
    ph, pw = alignment.pad_amounts(h, w, cfg.patch)

    conf_up = None
    if cfg.use_e2a:
        conf = confidence_eval(params, t, image_t)
        conf_pad = C.reflect_pad_br(conf, ph, pw)
        conf_up = C.repeat_patches(C.avg_pool_patches(conf_pad, cfg.patch), cfg.patch)

    pads = [C.reflect_pad_br(f, ph, pw) for f in f_intra]
    prim_grid = alignment.partition(pads[1].data[0], cfg.patch)

    aligns, top1s = [], []
    for v in range(3):
        if frozen is not None:
            matches = frozen[v]
        else:
            src_grid = prim_grid if v == 1 else alignment.partition(pads[v].data[0], cfg.patch)
            matches = alignment.topk_search(prim_grid, src_grid, cfg.top_k, cfg.radius)
        if collect is not None:
            collect.append(matches)
        aligned_v, top1_v = _align_one_view(cfg, pads[v], prim_grid, matches, conf_up, h, w)
        aligns.append(aligned_v)
        top1s.append(top1_v)

    wmap = T.concat_channels(f_intra)
    for j in (1, 2, 3):
        wmap = T.leaky_relu(_conv_block(params, f"u{t}.wt.c{j}", wmap))
    wmap = T.sigmoid(_conv_block(params, f"u{t}.wt.c4", wmap))

    feat = T.leaky_relu(C.conv2d(T.concat_channels(aligns),
                                 params[f"u{t}.fuse.reduce.w"],
                                 params[f"u{t}.fuse.reduce.b"]))
    feat = _conv_block(params, f"u{t}.fuse.conv", feat)
    fused = T.mul(wmap, feat)

    f_inter = [f_intra[0], fused, f_intra[2]]
    return f_inter, top1s


def run_units(params, features, frozen_align=None, collect_align=False):
    """Drive the T cascaded units over per-view features (primary in slot 1)."""
    cfg = params.config
    f_views = list(features)
    top1_prev = None
    intermediates = []
    records = [] if collect_align else None
    for t in range(cfg.units):
        if cfg.use_intra:
            f_intra = [intra_view_en(params, t, f, top1_prev) for f in f_views]
        else:
            f_intra = f_views
        image_t = e2a_predict(params, t, f_intra[1])
        intermediates.append(image_t)
        if cfg.use_inter:
            frozen_t = frozen_align[t] if frozen_align is not None else None
            collect_t = [] if collect_align else None
            f_views, top1s = inter_view_af(params, t, f_intra, image_t,
                                           frozen=frozen_t, collect=collect_t)
            if collect_align:
                records.append(collect_t)
            last = t == cfg.units - 1
            top1_prev = a2e_route(top1s) if (cfg.use_a2e and not last) else None
        else:
            f_views = f_intra
            top1_prev = None
    restored = _conv_block(params, "head", f_views[1])
    return restored, intermediates, records


def _image_to_tensor(img, dtype):
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"views must be H x W x 3 images, got {arr.shape}")
    return T.Tensor(arr.transpose(2, 0, 1)[None], dtype=dtype)


def order_views(primary):
    if primary not in (0, 1, 2):
        raise DataError(f"primary view index must be 0, 1 or 2, got {primary}")
    aux = [i for i in range(3) if i != primary]
    return [aux[0], primary, aux[1]]


def forward(params, views, primary=1, frozen_align=None, collect_align=False):
    """Enhance the selected primary view using all three low-light views."""
    if len(views) != 3:
        raise DimensionError("forward expects exactly three views")
    shapes = {np.asarray(v).shape for v in views}
    if len(shapes) != 1:
        raise DimensionError(f"views differ in shape: {shapes}")
    h, w = next(iter(shapes))[:2]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise DimensionError(f"views must be at least {MIN_SIDE}px per side, got {h}x{w}")
    dtype = next(iter(params.tensors.values())).data.dtype
    order = order_views(primary)
    feats = {}
    for i in sorted(set(order)):
        feats[i] = encode(params, _image_to_tensor(views[i], dtype))
    features = [feats[i] for i in order]
    restored, intermediates, records = run_units(
        params, features, frozen_align=frozen_align, collect_align=collect_align)
    return ForwardResult(restored=restored, intermediates=intermediates,
                         view_order=order, align_records=records)


def tensor_to_image(tensor):
    """Clamp a (1,3,H,W) prediction to a displayable H x W x 3 image."""
    arr = np.asarray(tensor.data)[0].transpose(1, 2, 0)
    return np.clip(arr, 0.0, 1.0).astype(np.float32)


def enhance_image(params, views, primary=1):
    return tensor_to_image(forward(params, views, primary=primary).restored)
