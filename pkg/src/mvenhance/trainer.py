"""Training loop: augmentation, batch composition, Adam, step-decay schedule,
checkpointing, and periodic evaluation.

Training is a pure function of (dataset, configs, seed): batches draw from a
single generator in a fixed order (scene, crop y, crop x, flip, primary view),
kernels are deterministic, and checkpoints capture parameters, Adam moments,
and the generator state, so a resumed run reproduces the uninterrupted
trajectory bit-exactly.
"""

import csv
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import network
from .engine import tensor as T
from .errors import ContractError, DataError, NumericDomainError
from .image_io import load_image
from .losses import l_total
from .metrics import psnr, ssim_metric
from .snapshot import load_tensors, save_tensors

GRAD_CLIP_NORM = 5.0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    crop: int = 48
    flip_prob: float = 0.5
    batch_triplets: int = 2
    lr_initial: float = 2e-4
    lr_final: float = 1e-5
    decay_at: int = 800
    total_iters: int = 2000
    seed: int = 0
    eval_every: int = 250

    def validate(self, model_cfg=None):
        if self.crop < network.MIN_SIDE:
            raise DataError(f"train config: crop must be >= {network.MIN_SIDE}")
        if model_cfg is not None:
            reach = model_cfg.patch * (2 * model_cfg.radius + 1)
            if self.crop < reach:
                raise DataError(
                    f"train config: crop {self.crop} smaller than patch*window {reach}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise DataError("train config: flip_prob must be in [0, 1]")
        if self.batch_triplets < 1:
            raise DataError("train config: batch_triplets must be >= 1")
        if self.lr_final > self.lr_initial:
            raise DataError("train config: lr_final must not exceed lr_initial")
        if self.total_iters < 1 or self.eval_every < 1:
            raise DataError("train config: iteration counts must be positive")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"train config: unknown keys {sorted(unknown)}")
        return cls(**d)


def lr_at(iteration, cfg):
    """Step schedule: initial rate before decay_at, final rate from then on."""
    if iteration < 0:
        raise ContractError("iteration must be non-negative")
    return cfg.lr_initial if iteration < cfg.decay_at else cfg.lr_final


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.m = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
        self.step = 0


def adam_step(params, grads, state, lr):
    """Standard bias-corrected Adam update, in place on the parameter data."""
    for name in params.tensors:
        if name not in grads:
            raise ContractError(f"adam_step: missing gradient for '{name}'")
    state.step += 1
    b1, b2 = ADAM_BETA1, ADAM_BETA2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, t in params.tensors.items():
        g = grads[name].astype(t.data.dtype, copy=False)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        t.data = t.data - (lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(t.data.dtype)


def clip_global_norm(grads, max_norm=GRAD_CLIP_NORM):
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        grads = {k: g * np.asarray(factor, dtype=g.dtype) for k, g in grads.items()}
    return grads, norm


@dataclass
class LoadedScene:
    scene: str
    lows: list
    gts: list


def load_dataset(manifest):
    scenes = []
    for entry in manifest.entries:
        if entry.low is None:
            raise DataError(f"scene '{entry.scene}' has no low-light views; run synth first")
        lows = [load_image(manifest.resolve(p)) for p in entry.low]
        gts = [load_image(manifest.resolve(p)) for p in entry.gt]
        scenes.append(LoadedScene(scene=entry.scene, lows=lows, gts=gts))
    return scenes


@dataclass
class Sample:
    views: list     # three low-light crops, H x W x 3
    primary: int
    gt: np.ndarray  # ground-truth crop of the primary view


def make_batch(scenes, rng, cfg):
    """Draw batch_triplets samples; crop window and flip are identical across
    the three views and the ground truth of each sample."""
    if not scenes:
        raise DataError("make_batch: empty dataset")
    samples = []
    for _ in range(cfg.batch_triplets):
        si = int(rng.integers(len(scenes)))
        sc = scenes[si]
        h, w = sc.gts[0].shape[:2]
        if cfg.crop > h or cfg.crop > w:
            raise DataError(f"crop {cfg.crop} larger than image {h}x{w}")
        y0 = int(rng.integers(h - cfg.crop + 1))
        x0 = int(rng.integers(w - cfg.crop + 1))
        flip = bool(rng.random() < cfg.flip_prob)
        primary = int(rng.integers(3))

        def window(img):
            crop = img[y0:y0 + cfg.crop, x0:x0 + cfg.crop]
            return np.ascontiguousarray(crop[:, ::-1] if flip else crop)

        samples.append(Sample(views=[window(v) for v in sc.lows],
                              primary=primary, gt=window(sc.gts[primary])))
    return samples


def evaluate(params, scenes, primary=1):
    """Mean PSNR/SSIM of enhanced primaries against their ground truth."""
    psnrs, ssims = [], []
    for sc in scenes:
        out = network.enhance_image(params, sc.lows, primary=primary)
        psnrs.append(psnr(out, sc.gts[primary]))
        ssims.append(ssim_metric(out, sc.gts[primary]))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def save_checkpoint(path, params, adam, iteration, train_cfg, rng):
    tensors = dict(params.as_arrays())
    for name, m in adam.m.items():
        tensors[f"adam.m.{name}"] = m
    for name, v in adam.v.items():
        tensors[f"adam.v.{name}"] = v
    save_tensors(path, tensors)
    sidecar = {
        "model": params.config.to_dict(),
        "train": train_cfg.to_dict(),
        "iteration": iteration,
        "adam_step": adam.step,
        "rng_state": rng.bit_generator.state,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1) + "\n")


def load_checkpoint(path, dtype=np.float32):
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.is_file():
        raise DataError(f"checkpoint sidecar missing: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    model_cfg = network.ModelConfig.from_dict(sidecar["model"])
    tensors = load_tensors(path)
    param_arrays = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    params = network.ModelParams.from_arrays(model_cfg, param_arrays, dtype=dtype)
    adam = AdamState(params)
    adam.step = int(sidecar["adam_step"])
    for name in params.tensors:
        adam.m[name] = tensors[f"adam.m.{name}"]
        adam.v[name] = tensors[f"adam.v.{name}"]
    return params, adam, sidecar


@dataclass
class TrainResult:
    params: network.ModelParams
    log_path: Path
    checkpoints: list
    final_loss: float


def _sample_loss(params, sample):
    result = network.forward(params, sample.views, primary=sample.primary)
    gt = T.Tensor(np.asarray(sample.gt).transpose(2, 0, 1)[None],
                  dtype=result.restored.data.dtype)
    return l_total(result.intermediates, result.restored, gt)


def train(scenes, model_cfg, train_cfg, out_dir, eval_scenes=None, resume=None):
    """Optimize from scratch or resume; writes checkpoints and a CSV log."""
    model_cfg.validate()
    train_cfg.validate(model_cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.csv"

    if resume is not None:
        params, adam, sidecar = load_checkpoint(resume)
        if sidecar["model"] != model_cfg.to_dict() or sidecar["train"] != train_cfg.to_dict():
            raise DataError("checkpoint was produced with a different configuration")
        rng = np.random.default_rng()
        rng.bit_generator.state = sidecar["rng_state"]
        start_iter = int(sidecar["iteration"])
        log_mode = "a"
    else:
        params = network.ModelParams.initialize(model_cfg, seed=train_cfg.seed)
        adam = AdamState(params)
        rng = np.random.default_rng([train_cfg.seed, 1])
        start_iter = 0
        log_mode = "w"

    checkpoints = []
    last_loss = float("nan")
    with open(log_path, log_mode, newline="") as log_file:
        writer = csv.writer(log_file)
        if log_mode == "w":
            writer.writerow(["iter", "lr", "loss", "eval_psnr", "eval_ssim"])
        for it in range(start_iter, train_cfg.total_iters):
            lr = lr_at(it, train_cfg)
            batch = make_batch(scenes, rng, train_cfg)
            sums = None
            batch_loss = 0.0
            for sample in batch:
                loss = _sample_loss(params, sample)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericDomainError(
                        f"non-finite loss {value} at iteration {it}")
                batch_loss += value
                T.backward(loss)
                if sums is None:
                    sums = {name: t.grad.copy() if t.grad is not None else
                            np.zeros_like(t.data) for name, t in params.tensors.items()}
                else:
                    for name, t in params.tensors.items():
                        if t.grad is not None:
                            sums[name] += t.grad
                T.zero_grads(params.tensors.values())
            batch_loss /= len(batch)
            last_loss = batch_loss
            grads = {k: v / len(batch) for k, v in sums.items()}
            grads, _ = clip_global_norm(grads)
            adam_step(params, grads, adam, lr)

            done = it + 1
            is_eval = done % train_cfg.eval_every == 0 or done == train_cfg.total_iters
            if is_eval:
                if eval_scenes:
                    ep, es = evaluate(params, eval_scenes)
                    row = [done, repr(lr), repr(batch_loss), repr(ep), repr(es)]
                else:
                    row = [done, repr(lr), repr(batch_loss), "", ""]
                ckpt = out_dir / f"checkpoint_{done:06d}.rctn"
                save_checkpoint(ckpt, params, adam, done, train_cfg, rng)
                checkpoints.append(ckpt)
            else:
                row = [done, repr(lr), repr(batch_loss), "", ""]
            writer.writerow(row)

    return TrainResult(params=params, log_path=log_path,
                       checkpoints=checkpoints, final_loss=last_loss)
