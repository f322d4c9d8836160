"""Trainable conditional denoiser: a fully connected network with
hand-rolled reverse-mode gradients and an adaptive-moment optimizer.

Input is the flattened noisy tri-axis image, the flattened query image, and
a sinusoidal timestep embedding. The network body predicts the clean image
x0; the noise prediction is assembled through the fixed affine skip
eps = (x_t - sqrt(abar)*x0_hat)/sqrt(1-abar). Predicting x0 instead of eps
removes the near-identity component of the noise-prediction map, which a
hidden layer narrower than the output could not represent. Weights are kept
in float64; checkpoints store little-endian float32.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import DenoiserInterface, DiffusionSchedule, make_schedule
from .errors import DegenerateChannel, DivergedLoss, NoIntersection, VanishingMass
from .extraction import extract_axes_soft, soft_extract_vjp

CHECKPOINT_MAGIC = b"AXISFORGE-CKPT"
CHECKPOINT_VERSION = 1
_DIVERGENCE_WARMUP = 50  # steps used to establish the divergence baseline


@dataclass(frozen=True)
class ArchConfig:
    image_size: int = 32
    hidden: int = 512
    time_embed_dim: int = 32

    def __post_init__(self):
        if self.image_size < 4 or self.hidden < 1:
            raise ValueError("bad architecture configuration")
        if self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be even")

    @property
    def triaxis_dim(self) -> int:
        return 3 * self.image_size * self.image_size

    @property
    def cond_dim(self) -> int:
        return self.image_size * self.image_size

    @property
    def input_dim(self) -> int:
        return self.triaxis_dim + self.cond_dim + self.time_embed_dim

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "hidden": self.hidden,
            "time_embed_dim": self.time_embed_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            image_size=int(d["image_size"]),
            hidden=int(d["hidden"]),
            time_embed_dim=int(d["time_embed_dim"]),
        )


@dataclass(frozen=True)
class OptConfig:
    steps: int = 2000
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0    # global gradient-norm cap, 0 disables
    lambda_geo: float = 0.0   # optional auxiliary geometric term on x0_hat
    geo_sharpness: float = 50.0
    log_every: int = 50

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "grad_clip": self.grad_clip,
            "lambda_geo": self.lambda_geo,
            "geo_sharpness": self.geo_sharpness,
            "log_every": self.log_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


def time_embedding(t, T: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of the (integer) timestep, transformer style."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


class MLPDenoiser(DenoiserInterface):
    """Two-hidden-layer tanh network; the body predicts x0, the noise
    prediction follows from the fixed skip connection."""

    def __init__(self, arch: ArchConfig, sched: DiffusionSchedule, rng: np.random.Generator):
        self.arch = arch
        self.sched = sched
        dims = [arch.input_dim, arch.hidden, arch.hidden, arch.triaxis_dim]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims, dims[1:]):
            self.weights.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
            self.biases.append(np.zeros(fan_out))

    @property
    def image_size(self) -> int:
        return self.arch.image_size

    # --- parameter bookkeeping ---

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    # --- forward / backward ---

    def _build_input(self, x_flat: np.ndarray, t, cond_flat: np.ndarray) -> np.ndarray:
        temb = time_embedding(t, self.sched.T, self.arch.time_embed_dim)
        if temb.shape[0] == 1 and x_flat.shape[0] > 1:
            temb = np.repeat(temb, x_flat.shape[0], axis=0)
        return np.concatenate([x_flat, cond_flat, temb], axis=1)

    def _forward(self, X: np.ndarray):
        z1 = X @ self.weights[0] + self.biases[0]
        h1 = np.tanh(z1)
        z2 = h1 @ self.weights[1] + self.biases[1]
        h2 = np.tanh(z2)
        out = h2 @ self.weights[2] + self.biases[2]
        return out, (X, h1, h2)

    def _backward(self, d_out: np.ndarray, cache, want_input_grad: bool = False):
        X, h1, h2 = cache
        grads = {}
        grads["W3"] = h2.T @ d_out
        grads["b3"] = d_out.sum(axis=0)
        d_h2 = d_out @ self.weights[2].T
        d_z2 = d_h2 * (1.0 - h2 * h2)
        grads["W2"] = h1.T @ d_z2
        grads["b2"] = d_z2.sum(axis=0)
        d_h1 = d_z2 @ self.weights[1].T
        d_z1 = d_h1 * (1.0 - h1 * h1)
        grads["W1"] = X.T @ d_z1
        grads["b1"] = d_z1.sum(axis=0)
        d_X = d_z1 @ self.weights[0].T if want_input_grad else None
        return grads, d_X

    # --- DenoiserInterface ---

    def _flatten(self, x_t: np.ndarray) -> np.ndarray:
        x = np.asarray(x_t, dtype=float)
        return x.reshape(1, -1)

    def _skip_coeffs(self, t) -> tuple[float, float]:
        ab = float(self.sched.alpha_bar[int(t) - 1])
        return np.sqrt(ab), np.sqrt(1.0 - ab)

    def evaluate(self, x_t, t, cond=None):
        x = np.asarray(x_t, dtype=float)
        if cond is None:
            raise ValueError("this denoiser is conditional; cond is required")
        X = self._build_input(x.reshape(1, -1), [t], np.asarray(cond, float).reshape(1, -1))
        out, _ = self._forward(X)
        sab, snab = self._skip_coeffs(t)
        return (x - sab * out.reshape(x.shape)) / snab

    def vjp(self, x_t, t, cond, cotangent):
        x = np.asarray(x_t, dtype=float)
        cot = np.asarray(cotangent, dtype=float)
        X = self._build_input(x.reshape(1, -1), [t], np.asarray(cond, float).reshape(1, -1))
        _, cache = self._forward(X)
        _, d_X = self._backward(cot.reshape(1, -1), cache, want_input_grad=True)
        body = d_X[:, : self.arch.triaxis_dim].reshape(x.shape)
        sab, snab = self._skip_coeffs(t)
        return (cot.reshape(x.shape) - sab * body) / snab


class Adam:
    """Adaptive-moment stochastic gradient optimizer."""

    def __init__(self, params: list[np.ndarray], cfg: OptConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._buf = [np.empty_like(p) for p in params]
        self.step_count = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.step_count += 1
        bc1 = 1.0 - c.beta1**self.step_count
        bc2 = 1.0 - c.beta2**self.step_count
        for p, g, m, v, buf in zip(params, grads, self.m, self.v, self._buf):
            # in-place update through one scratch buffer: the elementwise pass
            # over all parameters dominates the step cost otherwise
            m *= c.beta1
            np.multiply(g, 1.0 - c.beta1, out=buf)
            m += buf
            v *= c.beta2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - c.beta2
            v += buf
            np.divide(v, bc2, out=buf)
            np.sqrt(buf, out=buf)
            buf += c.adam_eps
            np.divide(m, buf, out=buf)
            buf *= c.lr / bc1
            p -= buf


@dataclass
class TrainResult:
    denoiser: MLPDenoiser
    log: list[dict] = field(default_factory=list)
    final_loss: float = float("nan")
    initial_loss: float = float("nan")


def train_denoiser(
    dataset: list[tuple[np.ndarray, np.ndarray]],
    arch: ArchConfig,
    opt: OptConfig,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    start_from: MLPDenoiser | None = None,
    gt_observations=None,
) -> TrainResult:
    """Minimize the noise-prediction objective over (tri-axis, query) pairs.

    ``gt_observations`` (optional, parallel to dataset) enables the auxiliary
    geometric term lambda_geo * L_geo(soft_extract(x0_hat), gt) on top of the
    standard objective.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    n = len(dataset)
    size = arch.image_size
    x0s = np.stack([np.asarray(x, float).reshape(-1) for x, _ in dataset])
    conds = np.stack([np.asarray(c, float).reshape(-1) for _, c in dataset])
    if x0s.shape[1] != arch.triaxis_dim or conds.shape[1] != arch.cond_dim:
        raise ValueError("dataset resolution does not match the architecture")

    den = start_from if start_from is not None else MLPDenoiser(arch, sched, rng)
    params = den.parameters()
    adam = Adam(params, opt)
    log: list[dict] = []
    running = None
    initial = None
    warmup_sum = 0.0
    use_geo = opt.lambda_geo > 0.0 and gt_observations is not None

    for step in range(1, opt.steps + 1):
        idx = rng.integers(0, n, size=opt.batch_size)
        ts = rng.integers(1, sched.T + 1, size=opt.batch_size)
        ab = sched.alpha_bar[ts - 1][:, None]
        eps = rng.standard_normal((opt.batch_size, arch.triaxis_dim))
        x0 = x0s[idx]
        x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
        X = den._build_input(x_t, ts, conds[idx])
        out, cache = den._forward(X)
        sab = np.sqrt(ab)
        snab = np.sqrt(1.0 - ab)
        eps_pred = (x_t - sab * out) / snab
        diff = eps_pred - eps
        loss = float((diff * diff).mean())
        d_out = (2.0 * diff / diff.size) * (-sab / snab)

        if use_geo:
            for k in range(opt.batch_size):
                obs_gt = gt_observations[idx[k]]
                img = out[k].reshape(size, size, 3)
                clamped = np.clip(img, 0.0, 1.0)
                try:
                    from .diffusion import geo_loss, geo_loss_adjoint

                    gen = extract_axes_soft(clamped, opt.geo_sharpness)
                    g_img = soft_extract_vjp(
                        clamped, opt.geo_sharpness, geo_loss_adjoint(gen, obs_gt)
                    )
                except (VanishingMass, DegenerateChannel, NoIntersection):
                    continue
                g_img = g_img * ((img > 0.0) & (img < 1.0))
                # the network output is x0_hat itself
                d_out[k] += opt.lambda_geo * g_img.reshape(-1) / opt.batch_size

        grads_dict, _ = den._backward(d_out, cache)
        grads = [
            grads_dict["W1"], grads_dict["b1"],
            grads_dict["W2"], grads_dict["b2"],
            grads_dict["W3"], grads_dict["b3"],
        ]
        if opt.grad_clip > 0.0:
            # small-t draws carry an abar/(1-abar) weight that produces rare
            # huge spikes; cap the global norm so one draw cannot knock out
            # the fit
            gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if gnorm > opt.grad_clip:
                scale = opt.grad_clip / gnorm
                for g in grads:
                    g *= scale
        adam.step(params, grads)

        if not math.isfinite(loss):
            raise DivergedLoss(f"non-finite loss at step {step}")
        if running is None:
            running = loss
        else:
            running = 0.99 * running + 0.01 * loss
        if step <= _DIVERGENCE_WARMUP:
            # per-batch losses are heavy-tailed (small-t draws dominate), so
            # a single batch is a meaningless divergence baseline
            warmup_sum += loss
            initial = warmup_sum / step
        elif running > 10.0 * initial:
            raise DivergedLoss(f"running loss {running:.4g} vs initial {initial:.4g}")
        if step == 1 or step % opt.log_every == 0 or step == opt.steps:
            log.append({"step": step, "loss": loss, "running": running})

    return TrainResult(denoiser=den, log=log, final_loss=running, initial_loss=initial)


# --- checkpoints ---

def save_checkpoint(path: str | Path, den: MLPDenoiser) -> None:
    """magic, version, JSON header (arch + schedule), float32 LE weights."""
    header = {
        "arch": den.arch.to_dict(),
        "schedule": den.sched.to_dict(),
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(hbytes)))
        f.write(hbytes)
        for p in den.parameters():
            f.write(np.asarray(p, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> MLPDenoiser:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode())
        arch = ArchConfig.from_dict(header["arch"])
        sp = header["schedule"]
        sched = make_schedule(int(sp["T"]), float(sp["zeta_start"]), float(sp["zeta_end"]))
        den = MLPDenoiser(arch, sched, np.random.default_rng(0))
        for p in den.parameters():
            raw = np.frombuffer(f.read(p.size * 4), dtype="<f4")
            p[...] = raw.reshape(p.shape).astype(float)
    return den
