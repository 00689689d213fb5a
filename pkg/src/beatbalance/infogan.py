"""Categorical-code GAN for class-targeted synthetic beat images.

One model is trained per minority beat class. The generator maps a 64-dim
standard-normal noise vector plus a small categorical one-hot code through
an upsampling conv stack ending in Tanh; the discriminator is a strided
conv stack (batch norm, Leaky ReLU, dropout) with a sigmoid real/fake head;
an auxiliary head of fully connected layers predicts the code from the
generated image via softmax. Training alternates one discriminator step and
one frozen-discriminator generator step per epoch, minimizing the
adversarial loss minus ``lambda_info`` times the mutual-information lower
bound (the cross-entropy between sampled codes and the auxiliary head's
prediction). The auxiliary head learns in both phases.

Snapshots of the full training state are written every ``snapshot_period``
epochs; training is resumable from any snapshot and is a pure function of
(initial state, seed, config).
"""

import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import nn
from .errors import ContractError
from .preprocess import BeatImage
from .oversample import SyntheticBatch
from .tensorio import load_tensors, read_json, save_tensors, write_json, write_pgm

log = logging.getLogger(__name__)

STATE_STEM = "state"
METRICS_NAME = "metrics.json"
GRID_NAME = "samples.pgm"


@dataclass(frozen=True)
class InfoGanConfig:
    image_size: int = 112
    noise_dim: int = 64
    code_dim: int = 2
    seed_size: int = 7
    seed_channels: int = 64
    g_channels: tuple = (64, 32, 16, 8)  # conv channels after each 2x upsample
    d_channels: tuple = (16, 32, 64, 128)  # stride-2 conv channels
    g_dense: int = 0  # optional fully connected stage ahead of the seed map
    d_dense: int = 0  # optional shared dense layer feeding both heads
    q_hidden: int = 128
    kernel: int = 5
    batch_size: int = 32
    learning_rate: float = 2e-4  # discriminator step size
    g_learning_rate: float = None  # generator/aux step size; defaults to learning_rate
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_info: float = 1.0
    dropout: float = 0.25
    leak: float = 0.2
    max_epochs: int = 100_000
    snapshot_period: int = 500

    def __post_init__(self):
        if self.seed_size * 2 ** len(self.g_channels) != self.image_size:
            raise ValueError(
                f"image_size {self.image_size} != seed_size {self.seed_size} * 2^{len(self.g_channels)} stages"
            )
        if self.image_size % 2 ** len(self.d_channels):
            raise ValueError("discriminator stride-2 stages must divide image_size")
        if self.lambda_info < 0:
            raise ValueError("lambda_info must be >= 0")

    @property
    def latent_dim(self):
        return self.noise_dim + self.code_dim

    @property
    def conv_feature_dim(self):
        final = self.image_size // 2 ** len(self.d_channels)
        return self.d_channels[-1] * final * final

    @property
    def feature_dim(self):
        return self.d_dense if self.d_dense else self.conv_feature_dim

    def to_dict(self):
        d = asdict(self)
        d["g_channels"] = list(self.g_channels)
        d["d_channels"] = list(self.d_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("g_channels", "d_channels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


#: 28x28 configuration for toy runs and tests.
DESK_CONFIG = InfoGanConfig(
    image_size=28,
    seed_channels=32,
    g_channels=(16, 8),
    d_channels=(16, 32),
    q_hidden=64,
    kernel=3,
    batch_size=16,
)


@dataclass(frozen=True)
class LatentInput:
    """Generator input: standard-normal noise plus a one-hot category code."""

    noise: np.ndarray
    code: np.ndarray

    def validate(self, config):
        noise = np.asarray(self.noise, dtype=np.float64)
        code = np.asarray(self.code, dtype=np.float64)
        if noise.shape != (config.noise_dim,):
            raise ContractError(f"noise must have shape ({config.noise_dim},), got {noise.shape}")
        if code.shape != (config.code_dim,):
            raise ContractError(f"code must have shape ({config.code_dim},), got {code.shape}")
        if not np.all(np.isin(code, (0.0, 1.0))) or code.sum() != 1.0:
            raise ContractError("code must be one-hot")
        return noise, code


def build_generator(config, rng, dtype=np.float32):
    c = config
    layers = []
    width = c.latent_dim
    if c.g_dense:
        layers += [
            nn.Dense(width, c.g_dense, rng, dtype=dtype),
            nn.BatchNorm(c.g_dense, spatial=False, dtype=dtype),
            nn.ReLU(),
        ]
        width = c.g_dense
    layers += [
        nn.Dense(width, c.seed_channels * c.seed_size**2, rng, dtype=dtype),
        nn.Reshape((c.seed_size, c.seed_size, c.seed_channels)),
        nn.BatchNorm(c.seed_channels, spatial=True, dtype=dtype),
        nn.ReLU(),
    ]
    prev = c.seed_channels
    for ch in c.g_channels:
        layers += [
            nn.Upsample2d(2),
            nn.Conv2d(prev, ch, c.kernel, rng, dtype=dtype),
            nn.BatchNorm(ch, spatial=True, dtype=dtype),
            nn.ReLU(),
        ]
        prev = ch
    layers += [nn.Conv2d(prev, 1, c.kernel, rng, dtype=dtype), nn.Tanh()]
    return nn.Sequential(layers)


def build_discriminator(config, rng, dtype=np.float32):
    """Returns (trunk, d_head, q_head); the heads share the trunk features."""
    c = config
    layers = []
    prev = 1
    for i, ch in enumerate(c.d_channels):
        layers.append(nn.Conv2d(prev, ch, c.kernel, rng, stride=2, dtype=dtype))
        if i > 0:
            layers.append(nn.BatchNorm(ch, spatial=True, dtype=dtype))
        layers += [nn.LeakyReLU(c.leak), nn.Dropout(c.dropout)]
        prev = ch
    layers.append(nn.Flatten())
    if c.d_dense:
        layers += [
            nn.Dense(c.conv_feature_dim, c.d_dense, rng, dtype=dtype),
            nn.BatchNorm(c.d_dense, spatial=False, dtype=dtype),
            nn.LeakyReLU(c.leak),
        ]
    trunk = nn.Sequential(layers)
    d_head = nn.Sequential([nn.Dense(c.feature_dim, 1, rng, dtype=dtype)])
    q_head = nn.Sequential(
        [
            nn.Dense(c.feature_dim, c.q_hidden, rng, dtype=dtype),
            nn.LeakyReLU(c.leak),
            nn.Dense(c.q_hidden, c.code_dim, rng, dtype=dtype),
        ]
    )
    return trunk, d_head, q_head


class InfoGanState:
    """Everything the training loop owns: three networks, three optimizers,
    the epoch counter and the seeded sampling stream."""

    def __init__(self, config, seed=0, beat_class=None, dtype=np.float32):
        self.config = config
        self.beat_class = beat_class
        self.dtype = dtype
        init_rng = np.random.default_rng(seed)
        self.generator = build_generator(config, init_rng, dtype)
        self.trunk, self.d_head, self.q_head = build_discriminator(config, init_rng, dtype)
        lr, b1, b2 = config.learning_rate, config.beta1, config.beta2
        g_lr = config.g_learning_rate if config.g_learning_rate is not None else lr
        self.opt_g = nn.Adam(self.generator.params(), lr=g_lr, beta1=b1, beta2=b2)
        self.opt_d = nn.Adam(self.trunk.params() + self.d_head.params(), lr=lr, beta1=b1, beta2=b2)
        self.opt_q = nn.Adam(self.q_head.params(), lr=g_lr, beta1=b1, beta2=b2)
        self.epoch = 0
        self.rng = np.random.default_rng(seed)

    # -- serialization ------------------------------------------------------

    def _named_parts(self):
        return {
            "generator": self.generator,
            "trunk": self.trunk,
            "d_head": self.d_head,
            "q_head": self.q_head,
            "opt_g": self.opt_g,
            "opt_d": self.opt_d,
            "opt_q": self.opt_q,
        }

    def tensors(self):
        out = {}
        for prefix, part in self._named_parts().items():
            for name, arr in part.state_items():
                out[f"{prefix}.{name}"] = arr.copy()
        return out

    def load_tensors_dict(self, mapping):
        for prefix, part in self._named_parts().items():
            part.load_state_items(mapping, f"{prefix}.")

    def discriminator_bytes(self):
        return nn.state_bytes(self.trunk) + nn.state_bytes(self.d_head)

    def generator_bytes(self):
        return nn.state_bytes(self.generator)


def binary_to_signed(images):
    """Map {0,1} pixels to the generator's [-1,1] range."""
    return np.asarray(images, dtype=np.float64) * 2.0 - 1.0


def signed_to_binary(images):
    """Threshold [-1,1] generator output at 0 into {0,1} pixels."""
    return (np.asarray(images) > 0).astype(np.uint8)


def _looks_unscaled(images):
    vals = np.asarray(images)
    return vals.size > 0 and np.all(np.isin(vals, (0, 1)))


def _check_scaled(images, what):
    x = np.asarray(images, dtype=np.float64)
    if _looks_unscaled(x):
        raise ContractError(f"{what} looks like raw binary pixels; scale with binary_to_signed first")
    if x.size and (x.min() < -1.0 or x.max() > 1.0):
        raise ContractError(f"{what} must lie in [-1, 1]")
    return x


def sample_latents(config, rng, n, code_index=None):
    """Batch of latent rows plus the sampled code indices."""
    noise = rng.standard_normal((n, config.noise_dim))
    if code_index is None:
        codes = rng.integers(0, config.code_dim, size=n)
    else:
        codes = np.full(n, code_index, dtype=np.int64)
    z = np.concatenate([noise, nn.one_hot(codes, config.code_dim)], axis=1)
    return z, codes


def generate(state, latent):
    """One image in [-1,1] for one latent input; deterministic given state."""
    noise, code = latent.validate(state.config)
    z = np.concatenate([noise, code])[None].astype(state.dtype)
    img = state.generator.forward(z, nn.EVAL_CTX)
    return img[0, :, :, 0].astype(np.float64)


def sample_images(state, n, rng, code_index=None, ctx=nn.EVAL_CTX):
    z, codes = sample_latents(state.config, rng, n, code_index)
    imgs = state.generator.forward(z.astype(state.dtype), ctx)
    return imgs[:, :, :, 0].astype(np.float64), codes


def discriminate(state, images):
    """(p_real, q_logits) for a batch (or single image) scaled to [-1,1]."""
    x = _check_scaled(images, "discriminator input")
    if x.ndim == 2:
        x = x[None]
    size = state.config.image_size
    if x.ndim != 3 or x.shape[1:] != (size, size):
        raise ContractError(f"expected images (N, {size}, {size}), got {np.asarray(images).shape}")
    feats = state.trunk.forward(x[..., None].astype(state.dtype), nn.EVAL_CTX)
    p_real = nn.sigmoid(state.d_head.forward(feats, nn.EVAL_CTX).reshape(-1))
    q_logits = state.q_head.forward(feats, nn.EVAL_CTX)
    return p_real.astype(np.float64), q_logits.astype(np.float64)


def train_step_discriminator(state, real_batch, rng):
    """One Adam step on the discriminator (and the auxiliary head).

    The real batch scores toward 1, a fresh generated batch toward 0; the
    auxiliary head additionally learns to recover the sampled codes from the
    generated batch. Generator parameters are untouched.
    """
    x = _check_scaled(real_batch, "real batch")
    if x.ndim == 2:
        x = x[None]
    if x.shape[0] == 0:
        raise ContractError("real batch is empty")
    cfg = state.config
    x = x[..., None].astype(state.dtype)

    state.opt_d.zero_grad()
    state.opt_q.zero_grad()

    # real pass: D(x) -> 1
    feats = state.trunk.forward(x, nn.train_ctx(rng))
    logits = state.d_head.forward(feats, nn.train_ctx(rng))
    loss_real, dlogits = nn.bce_with_logits(logits, 1.0)
    dfeat = state.d_head.backward(dlogits.reshape(logits.shape).astype(state.dtype))
    state.trunk.backward(dfeat)

    # fake pass: D(G(z)) -> 0; aux head recovers the code
    z, codes = sample_latents(cfg, rng, x.shape[0])
    fake = state.generator.forward(z.astype(state.dtype), nn.RunCtx(train=True, rng=rng, update_stats=False))
    feats = state.trunk.forward(fake, nn.train_ctx(rng))
    logits = state.d_head.forward(feats, nn.train_ctx(rng))
    loss_fake, dlogits = nn.bce_with_logits(logits, 0.0)
    q_logits = state.q_head.forward(feats, nn.train_ctx(rng))
    info_loss, _, dq = nn.softmax_cross_entropy(q_logits.astype(np.float64), codes)
    dfeat = state.d_head.backward(dlogits.reshape(logits.shape).astype(state.dtype))
    if cfg.lambda_info:
        dfeat = dfeat + state.q_head.backward((cfg.lambda_info * dq).astype(state.dtype))
    state.trunk.backward(dfeat)

    state.opt_d.step()
    if cfg.lambda_info:
        state.opt_q.step()
    return float(loss_real + loss_fake)


def train_step_generator(state, rng):
    """One Adam step on the generator (and the auxiliary head), D frozen.

    Non-saturating adversarial loss plus ``lambda_info`` times the code
    cross-entropy; the discriminator is traversed for gradients only, with
    its running statistics left untouched.
    """
    cfg = state.config
    state.opt_g.zero_grad()
    state.opt_q.zero_grad()

    z, codes = sample_latents(cfg, rng, cfg.batch_size)
    fake = state.generator.forward(z.astype(state.dtype), nn.train_ctx(rng))
    frozen = nn.RunCtx(train=True, rng=rng, update_stats=False)
    feats = state.trunk.forward(fake, frozen)
    logits = state.d_head.forward(feats, frozen)
    adv_loss, dlogits = nn.bce_with_logits(logits, 1.0)  # non-saturating: fool D
    q_logits = state.q_head.forward(feats, frozen)
    info_loss, _, dq = nn.softmax_cross_entropy(q_logits.astype(np.float64), codes)

    dfeat = state.d_head.backward(dlogits.reshape(logits.shape).astype(state.dtype))
    if cfg.lambda_info:
        dfeat = dfeat + state.q_head.backward((cfg.lambda_info * dq).astype(state.dtype))
    dimg = state.trunk.backward(dfeat)
    state.generator.backward(dimg)

    state.opt_g.step()
    if cfg.lambda_info:
        state.opt_q.step()
    return float(adv_loss), float(info_loss)


@dataclass
class Snapshot:
    """A periodic capture of the generator plus quality bookkeeping."""

    epoch: int
    config: InfoGanConfig
    generator_state: dict
    metrics: dict = field(default_factory=dict)
    grid: np.ndarray = None  # (k, H, W) binary sample grid
    beat_class: str = None
    path: str = None
    dtype: object = np.float32

    def make_generator(self):
        net = build_generator(self.config, np.random.default_rng(0), self.dtype)
        nn.load_state_dict(net, self.generator_state)
        return net

    def sample(self, n, rng, code_index=None):
        """n generated images in [-1,1], eval mode."""
        z, codes = sample_latents(self.config, rng, n, code_index)
        net = self.make_generator()
        imgs = net.forward(z.astype(self.dtype), nn.EVAL_CTX)
        return imgs[:, :, :, 0].astype(np.float64), codes


def _sample_grid(state, k=16):
    rng = np.random.default_rng(state.epoch)  # independent of the training stream
    imgs, _ = sample_images(state, k, rng)
    return signed_to_binary(imgs)


def _grid_to_pgm_array(grid):
    k, h, w = grid.shape
    cols = int(np.ceil(np.sqrt(k)))
    rows = int(np.ceil(k / cols))
    canvas = np.zeros((rows * h, cols * w), dtype=np.uint8)
    for i in range(k):
        r, c = divmod(i, cols)
        canvas[r * h : (r + 1) * h, c * w : (c + 1) * w] = grid[i] * 255
    return canvas


def save_snapshot(state, directory, metrics):
    """Persist the full training state plus a sample grid and metrics."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = state.tensors()
    save_tensors(directory / STATE_STEM, tensors)
    grid = _sample_grid(state)
    write_pgm(directory / GRID_NAME, _grid_to_pgm_array(grid))
    meta = {
        "format": "beatbalance-gan-snapshot",
        "version": 1,
        "epoch": state.epoch,
        "beat_class": state.beat_class,
        "config": state.config.to_dict(),
        "rng_state": _rng_state_to_json(state.rng),
        "metrics": metrics,
    }
    write_json(directory / METRICS_NAME, meta)
    return directory


def _rng_state_to_json(rng):
    st = rng.bit_generator.state
    return {"bit_generator": st["bit_generator"], "state": int(st["state"]["state"]), "inc": int(st["state"]["inc"]),
            "has_uint32": int(st["has_uint32"]), "uinteger": int(st["uinteger"])}


def _rng_from_json(d):
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": d["bit_generator"],
        "state": {"state": int(d["state"]), "inc": int(d["inc"])},
        "has_uint32": int(d["has_uint32"]),
        "uinteger": int(d["uinteger"]),
    }
    return rng


def load_state(directory, dtype=np.float32):
    """Rebuild a resumable training state from a snapshot directory."""
    directory = Path(directory)
    meta = read_json(directory / METRICS_NAME)
    config = InfoGanConfig.from_dict(meta["config"])
    state = InfoGanState(config, seed=0, beat_class=meta["beat_class"], dtype=dtype)
    state.load_tensors_dict(load_tensors(directory / STATE_STEM))
    state.epoch = meta["epoch"]
    state.rng = _rng_from_json(meta["rng_state"])
    return state


def load_snapshot(directory, dtype=np.float32):
    directory = Path(directory)
    meta = read_json(directory / METRICS_NAME)
    config = InfoGanConfig.from_dict(meta["config"])
    tensors = load_tensors(directory / STATE_STEM)
    gen_state = {k[len("generator.") :]: v for k, v in tensors.items() if k.startswith("generator.")}
    from .tensorio import read_pgm

    grid_canvas = read_pgm(directory / GRID_NAME)
    return Snapshot(
        epoch=meta["epoch"],
        config=config,
        generator_state=gen_state,
        metrics=meta.get("metrics", {}),
        grid=(grid_canvas[None] // 255).astype(np.uint8),
        beat_class=meta["beat_class"],
        path=str(directory),
        dtype=dtype,
    )


def train(state, images, snapshot_dir=None, max_epochs=None, snapshot_period=None, log_every=0):
    """Alternate D and frozen-D G steps; snapshot every ``snapshot_period``.

    ``images`` must already be scaled to [-1,1]. One epoch = one D step plus
    one G step on a freshly sampled minibatch. Resumes from ``state.epoch``.
    Returns the snapshots taken during this call.
    """
    cfg = state.config
    x = _check_scaled(images, "train images")
    if x.ndim != 3 or x.shape[0] == 0:
        raise ContractError("train images must be a nonempty (N, H, W) array")
    max_epochs = cfg.max_epochs if max_epochs is None else max_epochs
    snapshot_period = cfg.snapshot_period if snapshot_period is None else snapshot_period
    n = x.shape[0]
    snapshots = []
    window = {"d_loss": [], "g_loss": [], "info_loss": []}

    while state.epoch < max_epochs:
        state.epoch += 1
        batch = x[state.rng.integers(0, n, size=min(cfg.batch_size, n))]
        d_loss = train_step_discriminator(state, batch, state.rng)
        g_loss, info_loss = train_step_generator(state, state.rng)
        if not (np.isfinite(d_loss) and np.isfinite(g_loss) and np.isfinite(info_loss)):
            if snapshot_dir is not None:
                save_snapshot(state, Path(snapshot_dir) / f"diagnostic_{state.epoch:06d}", _window_means(window))
            raise FloatingPointError(f"non-finite loss at epoch {state.epoch}")
        window["d_loss"].append(d_loss)
        window["g_loss"].append(g_loss)
        window["info_loss"].append(info_loss)
        if log_every and state.epoch % log_every == 0:
            means = _window_means(window)
            log.info("epoch %d: d=%.4f g=%.4f info=%.4f", state.epoch, means["d_loss"], means["g_loss"], means["info_loss"])
        if state.epoch % snapshot_period == 0:
            metrics = _window_means(window)
            metrics["epoch"] = state.epoch
            snap_path = None
            if snapshot_dir is not None:
                snap_path = save_snapshot(state, Path(snapshot_dir) / f"{state.epoch:06d}", metrics)
            snapshots.append(
                Snapshot(
                    epoch=state.epoch,
                    config=cfg,
                    generator_state={k[len("generator.") :]: v for k, v in state.tensors().items() if k.startswith("generator.")},
                    metrics=metrics,
                    grid=_sample_grid(state),
                    beat_class=state.beat_class,
                    path=str(snap_path) if snap_path else None,
                    dtype=state.dtype,
                )
            )
            window = {"d_loss": [], "g_loss": [], "info_loss": []}
    return snapshots


def _window_means(window):
    return {k: (float(np.mean(v)) if v else None) for k, v in window.items()}


def select_snapshot(snapshots, scorer, samples=256, interactive=False, prompt=input):
    """Snapshot with the best automated quality score.

    ``scorer`` maps a batch of binary images to the fraction assigned to the
    target class. Ties go to the later epoch. With ``interactive=True`` the
    scored list is printed and a typed epoch number overrides the choice
    (empty input keeps the automatic winner), mirroring by-eye selection.
    """
    if not snapshots:
        raise ContractError("no snapshots to select from")
    scored = []
    for snap in sorted(snapshots, key=lambda s: s.epoch):
        imgs, _ = snap.sample(samples, np.random.default_rng(0))
        scored.append((float(scorer(signed_to_binary(imgs))), snap))
    best_score, best = scored[0]
    for score, snap in scored[1:]:
        if score >= best_score:  # ties resolve to the latest epoch
            best_score, best = score, snap
    if interactive:
        print("epoch  score  samples")
        for score, snap in scored:
            print(f"{snap.epoch:>6d}  {score:.3f}  {snap.path or '-'}")
        raw = prompt(f"epoch to use [default {best.epoch}]: ").strip()
        if raw:
            chosen = {s.epoch: s for _, s in scored}.get(int(raw))
            if chosen is None:
                raise ContractError(f"no snapshot at epoch {raw}")
            return chosen
    return best


def adversarial_oversample(snapshot, target_class, n, rng_seed=0):
    """n BeatImages generated from the selected snapshot for one class."""
    if n < 0:
        raise ContractError("sample count must be >= 0")
    images = []
    if n:
        raw, _ = snapshot.sample(n, np.random.default_rng(rng_seed))
        for i, img in enumerate(signed_to_binary(raw)):
            images.append(
                BeatImage(pixels=img, label=target_class, source=f"adversarial:{i:05d}", provenance="adversarial")
            )
    return SyntheticBatch(images=images, method="adversarial")
