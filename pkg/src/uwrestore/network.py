"""Three-level encoder/decoder restoration network.

Each level runs one or more units of ResBlock -> attention -> modulator on a
fixed width ladder (C, 2C, 4C). Heads at every decoder scale predict a
residual over an area-downsampled copy of the input, so a freshly built
model is the identity at all three scales.

Parameters live in a flat name->Tensor store. Names follow
``stage.block{j}.component.field`` for level blocks and ``stage.conv.{w,b}``
for the plumbing convolutions; see ``NAME_PATTERN``.
"""

import re
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .data import area_down2
from .dfesa import DfesaParams, dfesa_forward, init_dfesa_params
from .errors import ConfigError, ParameterError, ShapeError
from .sfm import REDUCTION, SfmParams, init_sfm_params, sfm_forward
from .spectral import zigzag_pairs

LEVELS = 3

NAME_PATTERN = re.compile(
    r"^(?:stem\.conv\.[wb]"
    r"|(?:down|up|fuse)[01]\.conv\.[wb]"
    r"|head[012]\.conv\.[wb]"
    r"|(?:enc[012]|dec[01])\.block\d+\.(?:resblock|dfesa|sfm)\.[a-z0-9_]+)$"
)


@dataclass
class ModelConfig:
    base_width: int = 16
    levels: int = 3
    blocks_per_level: int = 1
    pooling_ratio: float = 1.0
    dct_groups: int = 8
    enable_dfesa: bool = True
    enable_sfm: bool = True
    seed: int = 0

    def validate(self):
        if self.levels != LEVELS:
            raise ConfigError(f"levels must be {LEVELS}, got {self.levels}")
        if self.base_width < 4 or self.base_width % 4 != 0:
            raise ConfigError(f"base_width must be a positive multiple of 4, got {self.base_width}")
        if self.base_width % REDUCTION != 0:
            raise ConfigError(f"base_width {self.base_width} not divisible by {REDUCTION}")
        if self.dct_groups < 1 or self.base_width % self.dct_groups != 0:
            raise ConfigError(
                f"dct_groups {self.dct_groups} must be >= 1 and divide base_width {self.base_width}")
        if self.blocks_per_level < 1:
            raise ConfigError(f"blocks_per_level must be >= 1, got {self.blocks_per_level}")
        if not (0.0 < self.pooling_ratio <= 1.0):
            raise ConfigError(f"pooling_ratio must lie in (0, 1], got {self.pooling_ratio}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        return self

    def width(self, level):
        return self.base_width * (2 ** level)


# Fixed key order shared by checkpoints and the run-config parser.
CONFIG_FIELDS = [f.name for f in fields(ModelConfig)]


def config_to_items(cfg):
    out = []
    for name in CONFIG_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        out.append((name, text))
    return out


def config_from_items(items):
    kwargs = {}
    for name, text in items:
        if name not in CONFIG_FIELDS:
            raise ConfigError(f"unknown config key: {name}")
        kind = ModelConfig.__dataclass_fields__[name].type
        kind = kind if isinstance(kind, str) else kind.__name__
        if kind == "bool":
            if text not in ("true", "false"):
                raise ConfigError(f"bad bool for {name}: {text}")
            kwargs[name] = text == "true"
        elif kind == "float":
            try:
                kwargs[name] = float(text)
            except ValueError:
                raise ConfigError(f"bad float for {name}: {text}") from None
        else:
            try:
                kwargs[name] = int(text)
            except ValueError:
                raise ConfigError(f"bad int for {name}: {text}") from None
    return ModelConfig(**kwargs).validate()


class ParamStore:
    """Flat name -> Tensor mapping with deterministic (sorted) iteration."""

    def __init__(self):
        self._params = {}

    def add(self, name, tensor):
        if not NAME_PATTERN.match(name):
            raise ParameterError(f"parameter name violates grammar: {name}")
        if name in self._params:
            raise ParameterError(f"duplicate parameter name: {name}")
        self._params[name] = tensor

    def __getitem__(self, name):
        if name not in self._params:
            raise ParameterError(f"unknown parameter: {name}")
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def tensors(self):
        for name in self.names():
            yield self._params[name]

    def total_size(self):
        return sum(p.size for p in self.tensors())


def _register(store, prefix, params):
    for f in fields(params):
        value = getattr(params, f.name)
        if isinstance(value, T.Tensor):
            store.add(f"{prefix}.{f.name}", value)


def _gather(store, prefix, cls, **extra):
    kwargs = dict(extra)
    for f in fields(cls):
        if f.name not in kwargs:
            kwargs[f.name] = store[f"{prefix}.{f.name}"]
    return cls(**kwargs)


@dataclass
class ResBlockParams:
    conv_a_w: T.Tensor
    conv_a_b: T.Tensor
    conv_b_w: T.Tensor
    conv_b_b: T.Tensor
    dc_gate: T.Tensor   # per-channel sigmoid gate on the pooled component


def init_resblock_params(c, rng):
    # second conv starts at zero so the block is the identity at init
    return ResBlockParams(
        conv_a_w=T.he_uniform((c, c, 3, 3), c * 9, rng),
        conv_a_b=T.zeros((c,), requires_grad=True),
        conv_b_w=T.zeros((c, c, 3, 3), requires_grad=True),
        conv_b_b=T.zeros((c,), requires_grad=True),
        dc_gate=T.zeros((c,), requires_grad=True),
    )


def resblock_forward(x, p, ratio):
    """x + conv(relu(conv(x + gate * pooled(x)))) with a windowed average pool."""
    c = x.shape[0]
    _, low = T.avg_pool_ratio(x, ratio)
    gate = T.reshape(T.sigmoid(p.dc_gate), (c, 1, 1))
    t = T.add(x, T.mul(gate, low))
    t = T.conv2d(t, p.conv_a_w, p.conv_a_b, stride=1, pad=1)
    t = T.relu(t)
    t = T.conv2d(t, p.conv_b_w, p.conv_b_b, stride=1, pad=1)
    return T.add(x, t)


def _init_plain_conv(store, prefix, rng, c_in, c_out, k, zero=False):
    # plumbing convs are linear (no activation), so variance-preserving init
    fan_in = c_in * k * k
    if zero:
        w = T.zeros((c_out, c_in, k, k), requires_grad=True)
    else:
        w = T.glorot_uniform((c_out, c_in, k, k), fan_in, rng)
    store.add(f"{prefix}.conv.w", w)
    store.add(f"{prefix}.conv.b", T.zeros((c_out,), requires_grad=True))


def _init_level_blocks(store, prefix, cfg, c, rng):
    for j in range(cfg.blocks_per_level):
        _register(store, f"{prefix}.block{j}.resblock", init_resblock_params(c, rng))
        if cfg.enable_dfesa:
            _register(store, f"{prefix}.block{j}.dfesa", init_dfesa_params(c, rng))
        if cfg.enable_sfm:
            _register(store, f"{prefix}.block{j}.sfm", init_sfm_params(c, rng, cfg.dct_groups))


def build_model(cfg):
    """Initialise every parameter from cfg.seed; heads start at zero so the
    network begins as the identity mapping at each scale."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    store = ParamStore()
    widths = [cfg.width(i) for i in range(LEVELS)]

    _init_plain_conv(store, "stem", rng, 3, widths[0], 3)
    _init_level_blocks(store, "enc0", cfg, widths[0], rng)
    _init_plain_conv(store, "down0", rng, widths[0], widths[1], 3)
    _init_level_blocks(store, "enc1", cfg, widths[1], rng)
    _init_plain_conv(store, "down1", rng, widths[1], widths[2], 3)
    _init_level_blocks(store, "enc2", cfg, widths[2], rng)

    _init_plain_conv(store, "up1", rng, widths[2], widths[1], 3)
    _init_plain_conv(store, "fuse1", rng, 2 * widths[1], widths[1], 1)
    _init_level_blocks(store, "dec1", cfg, widths[1], rng)
    _init_plain_conv(store, "up0", rng, widths[1], widths[0], 3)
    _init_plain_conv(store, "fuse0", rng, 2 * widths[0], widths[0], 1)
    _init_level_blocks(store, "dec0", cfg, widths[0], rng)

    for s in range(LEVELS):
        _init_plain_conv(store, f"head{s}", rng, widths[s], 3, 3, zero=True)
    return store


def _level_forward(x, store, cfg, prefix):
    basis = zigzag_pairs(cfg.dct_groups)
    for j in range(cfg.blocks_per_level):
        rp = _gather(store, f"{prefix}.block{j}.resblock", ResBlockParams)
        x = resblock_forward(x, rp, cfg.pooling_ratio)
        if cfg.enable_dfesa:
            dp = _gather(store, f"{prefix}.block{j}.dfesa", DfesaParams)
            x = dfesa_forward(x, dp, cfg.pooling_ratio)
        if cfg.enable_sfm:
            sp = _gather(store, f"{prefix}.block{j}.sfm", SfmParams, basis=basis)
            x = sfm_forward(x, sp)
    return x


def _plain_conv(x, store, prefix, stride=1, pad=1):
    return T.conv2d(x, store[f"{prefix}.conv.w"], store[f"{prefix}.conv.b"],
                    stride=stride, pad=pad)


@dataclass
class MultiScaleOutput:
    """Predictions at full, half, and quarter resolution (index = scale)."""
    preds: list

    def __post_init__(self):
        if len(self.preds) != LEVELS:
            raise ShapeError(f"expected {LEVELS} scales, got {len(self.preds)}")

    @property
    def full(self):
        return self.preds[0]


def model_forward(params, cfg, img):
    """Run the network on one [3,H,W] image; H and W must be multiples of 4."""
    if len(img.shape) != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected [3,H,W] input, got {img.shape}")
    _, h, w = img.shape
    if h % 4 != 0 or w % 4 != 0:
        raise ShapeError(f"input sides must be multiples of 4, got {h}x{w}")

    img_half = T.constant(area_down2(img.data))
    img_quarter = T.constant(area_down2(img_half.data))

    x = _plain_conv(img, params, "stem")
    x = _level_forward(x, params, cfg, "enc0")
    skip0 = x
    x = _plain_conv(x, params, "down0", stride=2)
    x = _level_forward(x, params, cfg, "enc1")
    skip1 = x
    x = _plain_conv(x, params, "down1", stride=2)
    x = _level_forward(x, params, cfg, "enc2")

    pred2 = T.add(_plain_conv(x, params, "head2"), img_quarter)

    x = T.upsample_nearest(x, 2 * x.shape[1], 2 * x.shape[2])
    x = _plain_conv(x, params, "up1")
    x = _plain_conv(T.concat([x, skip1], 0), params, "fuse1", pad=0)
    x = _level_forward(x, params, cfg, "dec1")
    pred1 = T.add(_plain_conv(x, params, "head1"), img_half)

    x = T.upsample_nearest(x, 2 * x.shape[1], 2 * x.shape[2])
    x = _plain_conv(x, params, "up0")
    x = _plain_conv(T.concat([x, skip0], 0), params, "fuse0", pad=0)
    x = _level_forward(x, params, cfg, "dec0")
    pred0 = T.add(_plain_conv(x, params, "head0"), img)

    return MultiScaleOutput([pred0, pred1, pred2])


MIN_SIDE = 16  # smallest side the grouped-DCT statistics support end to end


def pad_for_model(arr):
    """Edge-replicate a [3,H,W] array so both sides are multiples of 4 and at
    least MIN_SIDE; returns (padded, (H, W)) for later cropping."""
    _, h, w = arr.shape
    th = max(MIN_SIDE, ((h + 3) // 4) * 4)
    tw = max(MIN_SIDE, ((w + 3) // 4) * 4)
    padded = np.pad(arr, ((0, 0), (0, th - h), (0, tw - w)), mode="edge")
    return padded, (h, w)


def restore_image(params, cfg, arr):
    """Restore one [3,H,W] float array in [0,1]; any H,W >= 1 accepted."""
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"expected [3,H,W] array, got {arr.shape}")
    padded, (h, w) = pad_for_model(np.asarray(arr, dtype=T.current_dtype()))
    out = model_forward(params, cfg, T.constant(padded)).full
    return np.clip(out.data[:, :h, :w], 0.0, 1.0)
