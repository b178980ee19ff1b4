"""Low-light degradation synthesis: darkening, mixed noise, triplet gating.

Darkening is beta * (alpha * v) ** gamma with alpha ~ U(0.9, 1),
beta ~ U(0.1, 0.3), gamma ~ U(1.4, 2.5), sampled independently per view.
Noise is signal-dependent Poisson shot noise followed by additive Gaussian
read noise, applied in display space, then clamped.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError

ALPHA_RANGE = (0.9, 1.0)
BETA_RANGE = (0.1, 0.3)
GAMMA_RANGE = (1.4, 2.5)

DEFAULT_SHOT_GAIN = 1000.0
DEFAULT_READ_SIGMA = 0.01


@dataclass
class DegradationParams:
    alpha: float
    beta: float
    gamma: float
    shot_gain: float = DEFAULT_SHOT_GAIN
    read_sigma: float = DEFAULT_READ_SIGMA
    seed: int = 0

    def __post_init__(self):
        if self.shot_gain <= 0:
            raise DataError("shot_gain must be positive")
        if self.read_sigma < 0:
            raise DataError("read_sigma must be non-negative")

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                "shot_gain": self.shot_gain, "read_sigma": self.read_sigma,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(alpha=float(d["alpha"]), beta=float(d["beta"]),
                       gamma=float(d["gamma"]), shot_gain=float(d["shot_gain"]),
                       read_sigma=float(d["read_sigma"]), seed=int(d["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed degradation params record: {exc}") from None


def sample_params(rng, shot_gain=DEFAULT_SHOT_GAIN, read_sigma=DEFAULT_READ_SIGMA):
    """Draw one view's degradation parameters from the sampling intervals."""
    return DegradationParams(
        alpha=float(rng.uniform(*ALPHA_RANGE)),
        beta=float(rng.uniform(*BETA_RANGE)),
        gamma=float(rng.uniform(*GAMMA_RANGE)),
        shot_gain=shot_gain,
        read_sigma=read_sigma,
        seed=int(rng.integers(0, 2**63 - 1)),
    )


def _check_unit_range(img, what):
    img = np.asarray(img, dtype=np.float32)
    if img.min() < 0.0 or img.max() > 1.0:
        raise DataError(f"{what} expects samples in [0, 1]")
    return img


def darken(img, p):
    img = _check_unit_range(img, "darken")
    out = p.beta * np.power(p.alpha * img, p.gamma, dtype=np.float32)
    return out.astype(np.float32)


def add_mixed_noise(img, p):
    """Poisson shot noise then Gaussian read noise, clamped; deterministic in p.seed."""
    img = _check_unit_range(img, "add_mixed_noise")
    rng = np.random.default_rng(p.seed)
    out = rng.poisson(img.astype(np.float64) * p.shot_gain).astype(np.float64) / p.shot_gain
    if p.read_sigma > 0:
        out = out + rng.normal(0.0, p.read_sigma, size=img.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def synth_triplet(gts, rng, shot_gain=DEFAULT_SHOT_GAIN, read_sigma=DEFAULT_READ_SIGMA):
    """Degrade three ground-truth views, each with its own sampled parameters."""
    if len(gts) != 3:
        raise DimensionError("synth_triplet expects exactly three views")
    params = [sample_params(rng, shot_gain, read_sigma) for _ in range(3)]
    lows = [add_mixed_noise(darken(gt, p), p) for gt, p in zip(gts, params)]
    return lows, params


def ssim_dissimilarity(a, b):
    """(1 - SSIM) / 2: zero for identical images, larger when structure differs."""
    from .losses import ssim_value

    return (1.0 - ssim_value(a, b)) / 2.0


@dataclass
class SimilarityGate:
    threshold: float = 0.2
    measure: callable = field(default=ssim_dissimilarity)


def gate_triplet(views, gate):
    """Admit a triplet iff all three pairwise dissimilarities are below threshold."""
    if len(views) != 3:
        raise DimensionError("gate_triplet expects exactly three views")
    shapes = {np.asarray(v).shape for v in views}
    if len(shapes) != 1:
        raise DimensionError(f"gate_triplet views differ in shape: {shapes}")
    for i in range(3):
        for j in range(i + 1, 3):
            if not gate.measure(views[i], views[j]) < gate.threshold:
                return False
    return True
