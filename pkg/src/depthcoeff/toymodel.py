"""A three-layer convolutional depth completion network with hand-written backprop.

Architecture: conv3x3(C_in -> H) -> ReLU -> conv3x3(H -> H) -> ReLU ->
conv3x3(H -> C_out), same padding, tensors in NHWC layout.

Input modes
    ``sp``: normalized sparse depth, validity mask[, guide]
    ``dc``: N depth-coefficient channels[, guide]
Loss modes
    ``mse``: one output channel, scaled to meters, masked MSE
    ``ce``: N logit channels, softmax cross-entropy against the GT coefficients
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .dc import BinGrid, decode_3coeff, decode_all, encode_image
from .errors import ConfigurationError, TrainingDivergedError
from .losses import ce_loss_and_grad, log_softmax, mse_loss_and_grad, softmax
from .metrics import evaluate
from .scene import SceneSample

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")

# schedule used for full-scale training; the desk-scale defaults below differ
FULL_SCALE_LR = 1e-4
FULL_SCALE_LR_HALVING_EPOCHS = 5


@dataclass(frozen=True)
class TrainConfig:
    input_mode: str = "dc"
    loss_mode: str = "ce"
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_halving_epochs: Optional[int] = None
    hidden: int = 16
    use_guide: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if self.input_mode not in ("sp", "dc"):
            raise ConfigurationError(f"input_mode must be 'sp' or 'dc', got {self.input_mode!r}")
        if self.loss_mode not in ("mse", "ce"):
            raise ConfigurationError(f"loss_mode must be 'mse' or 'ce', got {self.loss_mode!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not (self.lr > 0 and self.epochs >= 1 and self.batch_size >= 1 and self.hidden >= 1):
            raise ConfigurationError("lr, epochs, batch_size and hidden must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigurationError("invalid Adam hyperparameters")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError("dtype must be float32 or float64")

    @property
    def label(self) -> str:
        return f"{self.input_mode.upper()}/{self.loss_mode.upper()}"


def input_channels(config: TrainConfig, grid: BinGrid) -> int:
    base = 2 if config.input_mode == "sp" else grid.n_bins
    return base + int(config.use_guide)


def output_channels(config: TrainConfig, grid: BinGrid) -> int:
    return 1 if config.loss_mode == "mse" else grid.n_bins


def init_params(c_in: int, c_out: int, hidden: int = 16, seed: int = 0) -> dict[str, np.ndarray]:
    """Weights uniform in +-sqrt(1 / fan_in), zero biases. Kernels are (3, 3, C_in, C_out)."""
    rng = np.random.default_rng(seed)
    params = {}
    for i, (ci, co) in enumerate([(c_in, hidden), (hidden, hidden), (hidden, c_out)], 1):
        bound = np.sqrt(1.0 / (9 * ci))
        params[f"w{i}"] = rng.uniform(-bound, bound, (3, 3, ci, co))
        params[f"b{i}"] = np.zeros(co)
    return params


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B*H*W, 9*C) patches of the zero-padded input."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((b, h, w, 9, c), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, :, :, 3 * i + j] = xp[:, i:i + h, j:j + w]
    return cols.reshape(b * h * w, 9 * c)


def _col2im(dcols: np.ndarray, shape) -> np.ndarray:
    b, h, w, c = shape
    dcols = dcols.reshape(b, h, w, 9, c)
    dxp = np.zeros((b, h + 2, w + 2, c), dtype=dcols.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + w] += dcols[:, :, :, 3 * i + j]
    return dxp[:, 1:-1, 1:-1]


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    bsz, h, wd, _ = x.shape
    out = _im2col(x) @ w.reshape(-1, w.shape[-1]) + b
    return out.reshape(bsz, h, wd, w.shape[-1])


def _check_input(params, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ConfigurationError(f"input must be (B, H, W, C) or (H, W, C), got shape {x.shape}")
    if x.shape[-1] != params["w1"].shape[2]:
        raise ConfigurationError(f"input has {x.shape[-1]} channels, network expects {params['w1'].shape[2]}")
    return x


def forward(params: dict, x: np.ndarray, return_cache: bool = False):
    """Network output of shape (B, H, W, C_out)."""
    x = _check_input(params, x)
    shape = x.shape
    cols1 = _im2col(x)
    z1 = cols1 @ params["w1"].reshape(-1, params["w1"].shape[-1]) + params["b1"]
    a1 = np.maximum(z1, 0).reshape(shape[:3] + (-1,))
    cols2 = _im2col(a1)
    z2 = cols2 @ params["w2"].reshape(-1, params["w2"].shape[-1]) + params["b2"]
    a2 = np.maximum(z2, 0).reshape(shape[:3] + (-1,))
    cols3 = _im2col(a2)
    out = (cols3 @ params["w3"].reshape(-1, params["w3"].shape[-1]) + params["b3"]).reshape(shape[:3] + (-1,))
    if return_cache:
        return out, (shape, cols1, z1, cols2, z2, cols3)
    return out


def backward(params: dict, x: np.ndarray, dout: np.ndarray, cache=None) -> dict[str, np.ndarray]:
    """Parameter gradients given the gradient of the loss w.r.t. the output."""
    if cache is None:
        _, cache = forward(params, x, return_cache=True)
    shape, cols1, z1, cols2, z2, cols3 = cache
    bsz, h, w, _ = shape
    g = dout.reshape(bsz * h * w, -1)
    grads = {}

    grads["w3"] = (cols3.T @ g).reshape(params["w3"].shape)
    grads["b3"] = g.sum(axis=0)
    g = _col2im(g @ params["w3"].reshape(-1, params["w3"].shape[-1]).T, (bsz, h, w, z2.shape[-1]))
    g = g.reshape(-1, z2.shape[-1]) * (z2 > 0)

    grads["w2"] = (cols2.T @ g).reshape(params["w2"].shape)
    grads["b2"] = g.sum(axis=0)
    g = _col2im(g @ params["w2"].reshape(-1, params["w2"].shape[-1]).T, (bsz, h, w, z1.shape[-1]))
    g = g.reshape(-1, z1.shape[-1]) * (z1 > 0)

    grads["w1"] = (cols1.T @ g).reshape(params["w1"].shape)
    grads["b1"] = g.sum(axis=0)
    return grads


# -- inputs, targets, losses ---------------------------------------------------

def make_input(sample: SceneSample, config: TrainConfig, grid: BinGrid) -> np.ndarray:
    """(H, W, C_in) network input for one scene."""
    sparse = np.asarray(sample.sparse, dtype=np.float64)
    if config.input_mode == "sp":
        chans = [sparse / grid.d_max, (sparse != 0).astype(np.float64)]
        x = np.stack(chans, axis=-1)
    else:
        x = encode_image(sparse, grid, clamp=True)
    if config.use_guide:
        x = np.concatenate([x, np.asarray(sample.guide, dtype=np.float64)[..., None]], axis=-1)
    return x


def make_target(sample: SceneSample, config: TrainConfig, grid: BinGrid):
    """(target, mask): GT depth for MSE, GT coefficients for CE; mask marks pixels with GT."""
    gt = np.asarray(sample.gt, dtype=np.float64)
    mask = gt != 0
    if config.loss_mode == "mse":
        return gt, mask
    return encode_image(gt, grid, clamp=True), mask


def loss_and_grad(params: dict, x, target, mask, config: TrainConfig, grid: BinGrid, scale: float = 1.0):
    """Configured loss (times ``scale``) and its parameter gradients."""
    out, cache = forward(params, x, return_cache=True)
    if config.loss_mode == "mse":
        loss, dpred = mse_loss_and_grad(out[..., 0] * grid.d_max, target, mask)
        dout = (dpred * grid.d_max)[..., None]
    else:
        loss, dout = ce_loss_and_grad(out, target, mask)
    grads = backward(params, x, scale * dout, cache)
    return scale * loss, grads


def predict_coefficients(params: dict, x) -> np.ndarray:
    """Softmax of the logit head; every pixel sums to one."""
    return softmax(forward(params, x))


def predict_depth(params: dict, x, config: TrainConfig, grid: BinGrid, decode: str = "3coeff") -> np.ndarray:
    """Dense depth prediction of shape (B, H, W).

    The depth head is clipped to the span of bin centers so every pixel stays
    a valid (positive) depth.
    """
    out = forward(params, x)
    if config.loss_mode == "mse":
        return np.clip(out[..., 0] * grid.d_max, grid.centers[0], grid.centers[-1])
    probs = softmax(out)
    return decode_3coeff(probs, grid) if decode == "3coeff" else decode_all(probs, grid)


# -- optimisation ----------------------------------------------------------------

class Adam:
    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: dict):
        pass

    def step(self, params: dict, grads: dict, lr: float) -> None:
        for k in params:
            params[k] -= lr * grads[k]


def make_optimizer(config: TrainConfig, params: dict):
    if config.optimizer == "adam":
        return Adam(params, config.beta1, config.beta2, config.eps)
    return SGD(params)


def learning_rate(config: TrainConfig, epoch: int) -> float:
    if config.lr_halving_epochs:
        return config.lr * 0.5 ** (epoch // config.lr_halving_epochs)
    return config.lr


@dataclass
class TrainResult:
    params: dict
    curve: list[float]
    config: TrainConfig
    seconds: float = 0.0


def train(
    config: TrainConfig,
    scenes: Sequence[SceneSample],
    grid: BinGrid,
    log: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Mini-batch training; returns parameters and the per-epoch mean loss.

    Batches are drawn from a permutation seeded by ``config.seed`` so two runs
    with the same config and scenes give identical parameters.
    """
    if not scenes:
        raise ConfigurationError("need at least one training scene")
    dtype = np.dtype(config.dtype)
    xs = np.stack([make_input(s, config, grid) for s in scenes]).astype(dtype)
    tgt = [make_target(s, config, grid) for s in scenes]
    ys = np.stack([t for t, _ in tgt]).astype(dtype)
    masks = np.stack([m for _, m in tgt])

    params = {k: v.astype(dtype) for k, v in
              init_params(xs.shape[-1], output_channels(config, grid), config.hidden, config.seed).items()}
    opt = make_optimizer(config, params)
    rng = np.random.default_rng([config.seed, 7])
    n = len(scenes)
    curve = []
    start = time.perf_counter()
    for epoch in range(config.epochs):
        lr = learning_rate(config, epoch)
        order = rng.permutation(n)
        total, count = 0.0, 0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            loss, grads = loss_and_grad(params, xs[idx], ys[idx], masks[idx], config, grid)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            opt.step(params, grads, lr)
            total += loss * len(idx)
            count += len(idx)
        curve.append(total / count)
        if log is not None:
            log(epoch, curve[-1])
    params = {k: v.astype(np.float64) for k, v in params.items()}
    return TrainResult(params, curve, config, time.perf_counter() - start)


def dataset_loss(params: dict, scenes: Sequence[SceneSample], config: TrainConfig, grid: BinGrid) -> float:
    xs = np.stack([make_input(s, config, grid) for s in scenes])
    tgt = [make_target(s, config, grid) for s in scenes]
    loss, _ = loss_and_grad(params, xs, np.stack([t for t, _ in tgt]), np.stack([m for _, m in tgt]), config, grid)
    return loss


def fit_free_logits(
    targets: Sequence[np.ndarray],
    steps: int = 10_000,
    lr: float = 0.1,
    decay: float = 0.998,
    method: str = "sign",
) -> tuple[np.ndarray, list[float]]:
    """Minimize mean cross-entropy of one free logit vector against several DC targets.

    This is the network reduced to a bias; the optimum is the softmax equal to
    the average target. Bins outside every target's support only reach zero
    probability as their logits go to -inf, which plain gradient steps approach
    at rate 1/t. ``method="sign"`` (the default) steps along the sign of the
    gradient with a geometrically decaying step size, so those logits fall
    linearly and the remaining entries converge to machine precision.
    ``"gd"`` and ``"adam"`` use the same decaying step size.

    Returns the logits and the loss recorded every 100 steps.
    """
    tg = np.asarray(targets, dtype=np.float64)
    if tg.ndim != 2:
        raise ConfigurationError("targets must be a (K, N) array")
    if method not in ("sign", "gd", "adam"):
        raise ConfigurationError(f"unknown method {method!r}")
    mean_target = tg.mean(axis=0)
    params = {"z": np.zeros(tg.shape[1])}
    adam = Adam(params) if method == "adam" else None
    history = []
    rate = lr
    for step in range(steps):
        if step % 100 == 0:
            logp = log_softmax(params["z"])
            history.append(float(-(np.where(tg > 0, tg * logp, 0.0)).sum(axis=1).mean()))
        e = np.exp(params["z"] - params["z"].max())
        grad = e / e.sum() - mean_target
        if method == "sign":
            params["z"] -= rate * np.sign(grad)
        elif method == "gd":
            params["z"] -= rate * grad
        else:
            adam.step(params, {"z": grad}, rate)
        rate *= decay
    return params["z"], history


# -- four-way ablation -------------------------------------------------------------

ABLATION_CONFIGS = (("sp", "mse"), ("dc", "mse"), ("sp", "ce"), ("dc", "ce"))


@dataclass
class AblationRow:
    input_mode: str
    loss_mode: str
    mae: float
    rmse: float
    tmae: float
    trmse: float
    mixing: float
    final_loss: float

    @property
    def label(self) -> str:
        return f"{self.input_mode.upper()}/{self.loss_mode.upper()}"


ABLATION_HEADER = ("input", "loss", "mae", "rmse", "tmae", "trmse", "mixing", "final_loss")


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    lines = [",".join(ABLATION_HEADER)]
    for r in rows:
        vals = [r.input_mode.upper(), r.loss_mode.upper()] + [
            repr(float(v)) for v in (r.mae, r.rmse, r.tmae, r.trmse, r.mixing, r.final_loss)
        ]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def run_ablation(
    train_set: Sequence[SceneSample],
    eval_set: Sequence[SceneSample],
    grid: BinGrid,
    t: float = 1.0,
    base: TrainConfig = TrainConfig(),
    window: int = 2,
    log: Optional[Callable[[str], None]] = None,
) -> list[AblationRow]:
    """Train SP/MSE, DC/MSE, SP/CE and DC/CE with shared data and seed; evaluate each."""
    from .analysis import mixed_pixel_rate

    gt = np.stack([s.gt for s in eval_set])
    rows = []
    for input_mode, loss_mode in ABLATION_CONFIGS:
        cfg = replace(base, input_mode=input_mode, loss_mode=loss_mode)
        result = train(cfg, train_set, grid)
        xs = np.stack([make_input(s, cfg, grid) for s in eval_set])
        pred = predict_depth(result.params, xs, cfg, grid)
        rep = evaluate(pred, gt, t=t)
        mix = mixed_pixel_rate(pred, gt, t=t, radius=window)
        rows.append(AblationRow(input_mode, loss_mode, rep.mae, rep.rmse, rep.tmae, rep.trmse, mix, result.curve[-1]))
        if log is not None:
            log(f"{cfg.label}: tmae={rep.tmae:.4f} trmse={rep.trmse:.4f} mixing={mix:.4f} ({result.seconds:.1f}s)")
    return rows


def params_to_list(params: dict) -> list[np.ndarray]:
    return [params[k] for k in PARAM_NAMES]


def params_from_list(arrays: Sequence[np.ndarray]) -> dict:
    if len(arrays) != len(PARAM_NAMES):
        raise ConfigurationError(f"expected {len(PARAM_NAMES)} parameter tensors, got {len(arrays)}")
    return dict(zip(PARAM_NAMES, (np.asarray(a, dtype=np.float64) for a in arrays)))
