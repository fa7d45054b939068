"""Model configuration, weight containers, and the SVW1 weight file format.

SVW1 layout: 8-byte magic ``SVW1\\0\\0\\0\\0``, a little-endian uint32 header
length, a UTF-8 header with one ``name rank dim0 dim1 ...`` line per tensor,
then the packed little-endian float32 payloads in header order.

Seeded weights come from a single xorshift64* stream in a fixed enumeration
order (stem, then each layer's blocks in order, then the head), so two
implementations of the generator produce bit-identical files. Matrix entries
are uniform in (-s, s) with s = 1/sqrt(fan_in); biases use s = 0.05 except
the state-transition log ``a_log`` (uniform in [-1, 0.5), giving strictly
negative A = -exp(a_log)) and the step bias ``b_delta`` (uniform in [-1, 0)).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, WeightFormatError
from .patches import StemWeights
from .rng import Xorshift64Star
from .traversal import MergeWeights

MAGIC = b"SVW1\x00\x00\x00\x00"

_DEFAULT_LAYOUT = (2, 2, 5, 2)
_DEFAULT_TURNS = (0, 1, 2, 3)


@dataclass(frozen=True)
class ModelConfig:
    p: int = 4
    in_channels: int = 3
    channels: int = 32
    state_dim: int = 8
    m: int = 4
    k: int = 5
    layout: tuple[int, ...] = _DEFAULT_LAYOUT
    merge_mode: str = "concat_proj"
    zoh_mode: str = "approx"
    num_classes: int = 10
    rfn_turns: tuple[int, ...] = _DEFAULT_TURNS

    def __post_init__(self):
        if self.merge_mode not in ("concat_proj", "sum"):
            raise ConfigError(f"merge_mode must be concat_proj or sum, got {self.merge_mode!r}")
        if self.zoh_mode not in ("approx", "exact"):
            raise ConfigError(f"zoh_mode must be approx or exact, got {self.zoh_mode!r}")
        if not self.layout or any(b < 1 for b in self.layout):
            raise ConfigError(f"layout must be positive block counts, got {self.layout}")
        if any(q not in (0, 1, 2, 3) for q in self.rfn_turns) or not self.rfn_turns:
            raise ConfigError(f"rfn_turns must be a nonempty subset of 0..3, got {self.rfn_turns}")


_INT_KEYS = {"p": "p", "in_channels": "in_channels", "C": "channels",
             "N": "state_dim", "m": "m", "k": "k", "num_classes": "num_classes"}


def parse_model_config(text: str) -> ModelConfig:
    """Parse UTF-8 key=value lines; blank lines and #-comments are skipped."""
    kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _INT_KEYS:
            try:
                kwargs[_INT_KEYS[key]] = int(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} needs an integer") from None
        elif key == "layout":
            kwargs["layout"] = tuple(int(v) for v in value.split(","))
        elif key == "rfn_turns":
            kwargs["rfn_turns"] = tuple(int(v) for v in value.split(","))
        elif key == "merge_mode":
            kwargs["merge_mode"] = value
        elif key == "zoh_mode":
            kwargs["zoh_mode"] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return ModelConfig(**kwargs)


def render_model_config(cfg: ModelConfig) -> str:
    return (
        f"p={cfg.p}\nin_channels={cfg.in_channels}\nC={cfg.channels}\n"
        f"N={cfg.state_dim}\nm={cfg.m}\nk={cfg.k}\n"
        f"layout={','.join(str(b) for b in cfg.layout)}\n"
        f"merge_mode={cfg.merge_mode}\nzoh_mode={cfg.zoh_mode}\n"
        f"num_classes={cfg.num_classes}\n"
        f"rfn_turns={','.join(str(q) for q in cfg.rfn_turns)}\n"
    )


@dataclass(frozen=True)
class S6Weights:
    """Per-block selective-scan parameters (float32 storage)."""

    w_in: np.ndarray      # (C, C) input projection
    w_delta: np.ndarray   # (C,) step-size projection
    b_delta: float
    w_b: np.ndarray       # (N, C) state input projection
    b_b: np.ndarray       # (N,)
    w_c: np.ndarray       # (N, C) state readout projection
    b_c: np.ndarray       # (N,)
    a_log: np.ndarray     # (N,), A = -exp(a_log)
    w_out: np.ndarray     # (C, C) output projection
    b_out: np.ndarray     # (C,)


@dataclass(frozen=True)
class BlockWeights:
    s6: S6Weights
    merge: MergeWeights


@dataclass(frozen=True)
class ModelWeights:
    stem: StemWeights
    blocks: tuple[tuple[BlockWeights, ...], ...]
    head: np.ndarray      # (C, num_classes)


def seeded_model_weights(cfg: ModelConfig, seed: int) -> ModelWeights:
    """Deterministic weights from the documented xorshift64* scheme."""
    rng = Xorshift64Star(seed)

    def uniform(shape, lo, hi):
        size = int(np.prod(shape))
        draws = rng.floats(size)
        return (lo + draws * (hi - lo)).astype(np.float32).reshape(shape)

    def matrix(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return uniform(shape, -s, s)

    def bias(shape):
        return uniform(shape, -0.05, 0.05)

    c = cfg.channels
    n = cfg.state_dim
    stem_fan = cfg.p * cfg.p * cfg.in_channels
    stem = StemWeights(
        patch_size=cfg.p,
        in_channels=cfg.in_channels,
        out_channels=c,
        projection=matrix((stem_fan, c), stem_fan),
        bias=bias((c,)),
    )
    layers = []
    for blocks_in_layer in cfg.layout:
        blocks = []
        for _ in range(blocks_in_layer):
            s6 = S6Weights(
                w_in=matrix((c, c), c),
                w_delta=matrix((c,), c),
                b_delta=float(uniform((1,), -1.0, 0.0)[0]),
                w_b=matrix((n, c), c),
                b_b=uniform((n,), -0.5, 0.5),
                w_c=matrix((n, c), c),
                b_c=uniform((n,), -0.5, 0.5),
                a_log=uniform((n,), -1.0, 0.5),
                w_out=matrix((c, c), c),
                b_out=bias((c,)),
            )
            if cfg.merge_mode == "concat_proj":
                merge = MergeWeights(
                    mode="concat_proj",
                    projection=matrix((2 * cfg.m * c, c), 2 * cfg.m * c).astype(np.float64),
                    bias=bias((c,)).astype(np.float64),
                )
            else:
                merge = MergeWeights(mode="sum")
            blocks.append(BlockWeights(s6=s6, merge=merge))
        layers.append(tuple(blocks))
    head = matrix((c, cfg.num_classes), c)
    return ModelWeights(stem=stem, blocks=tuple(layers), head=head)


def _model_records(w: ModelWeights):
    records: list[tuple[str, np.ndarray]] = [
        ("stem.projection", w.stem.projection),
        ("stem.bias", w.stem.bias),
    ]
    for li, layer in enumerate(w.blocks):
        for bi, block in enumerate(layer):
            pre = f"layer{li}.block{bi}"
            s6 = block.s6
            records += [
                (f"{pre}.s6.w_in", s6.w_in),
                (f"{pre}.s6.w_delta", s6.w_delta),
                (f"{pre}.s6.b_delta", np.array([s6.b_delta], dtype=np.float32)),
                (f"{pre}.s6.w_b", s6.w_b),
                (f"{pre}.s6.b_b", s6.b_b),
                (f"{pre}.s6.w_c", s6.w_c),
                (f"{pre}.s6.b_c", s6.b_c),
                (f"{pre}.s6.a_log", s6.a_log),
                (f"{pre}.s6.w_out", s6.w_out),
                (f"{pre}.s6.b_out", s6.b_out),
            ]
            if block.merge.mode == "concat_proj":
                records += [
                    (f"{pre}.merge.projection", block.merge.projection),
                    (f"{pre}.merge.bias", block.merge.bias),
                ]
    records.append(("head.projection", w.head))
    return records


def write_weight_file(records) -> bytes:
    """Serialize (name, array) pairs to SVW1 bytes."""
    header_lines = []
    payloads = []
    for name, arr in records:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        dims = " ".join(str(d) for d in arr.shape) if arr.ndim else "1"
        rank = arr.ndim if arr.ndim else 1
        header_lines.append(f"{name} {rank} {dims}")
        payloads.append(arr.astype("<f4").tobytes(order="C"))
    header = ("\n".join(header_lines) + "\n").encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(payloads)


def read_weight_file(data: bytes) -> dict[str, np.ndarray]:
    """Parse SVW1 bytes into an ordered name -> float32 array mapping."""
    if data[:8] != MAGIC:
        raise WeightFormatError("missing SVW1 magic")
    if len(data) < 12:
        raise WeightFormatError("truncated header length")
    (hlen,) = struct.unpack("<I", data[8:12])
    header_end = 12 + hlen
    if len(data) < header_end:
        raise WeightFormatError("truncated header")
    try:
        header = data[12:header_end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WeightFormatError(f"header is not UTF-8: {exc}") from None
    out: dict[str, np.ndarray] = {}
    pos = header_end
    for lineno, line in enumerate(header.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 3:
            raise WeightFormatError(f"header line {lineno}: expected name rank dims")
        name = parts[0]
        try:
            rank = int(parts[1])
            dims = tuple(int(d) for d in parts[2:])
        except ValueError:
            raise WeightFormatError(f"header line {lineno}: bad integers") from None
        if len(dims) != rank:
            raise WeightFormatError(
                f"header line {lineno}: rank {rank} but {len(dims)} dims"
            )
        size = int(np.prod(dims)) if dims else 1
        nbytes = 4 * size
        if len(data) < pos + nbytes:
            raise WeightFormatError(f"truncated payload for tensor {name!r}")
        arr = np.frombuffer(data[pos : pos + nbytes], dtype="<f4").reshape(dims)
        out[name] = arr.astype(np.float32)
        pos += nbytes
    if pos != len(data):
        raise WeightFormatError(f"{len(data) - pos} trailing bytes after payloads")
    return out


def save_model_weights(w: ModelWeights) -> bytes:
    return write_weight_file(_model_records(w))


def load_model_weights(data: bytes, cfg: ModelConfig) -> ModelWeights:
    """Rebuild ModelWeights from SVW1 bytes; shapes are validated against cfg."""
    tensors = read_weight_file(data)

    def take(name, shape):
        if name not in tensors:
            raise WeightFormatError(f"missing tensor {name!r}")
        arr = tensors[name]
        if tuple(arr.shape) != tuple(shape):
            raise WeightFormatError(
                f"tensor {name!r} has shape {arr.shape}, expected {tuple(shape)}"
            )
        return arr

    c = cfg.channels
    n = cfg.state_dim
    stem_fan = cfg.p * cfg.p * cfg.in_channels
    stem = StemWeights(
        patch_size=cfg.p,
        in_channels=cfg.in_channels,
        out_channels=c,
        projection=take("stem.projection", (stem_fan, c)),
        bias=take("stem.bias", (c,)),
    )
    layers = []
    for li, blocks_in_layer in enumerate(cfg.layout):
        blocks = []
        for bi in range(blocks_in_layer):
            pre = f"layer{li}.block{bi}"
            s6 = S6Weights(
                w_in=take(f"{pre}.s6.w_in", (c, c)),
                w_delta=take(f"{pre}.s6.w_delta", (c,)),
                b_delta=float(take(f"{pre}.s6.b_delta", (1,))[0]),
                w_b=take(f"{pre}.s6.w_b", (n, c)),
                b_b=take(f"{pre}.s6.b_b", (n,)),
                w_c=take(f"{pre}.s6.w_c", (n, c)),
                b_c=take(f"{pre}.s6.b_c", (n,)),
                a_log=take(f"{pre}.s6.a_log", (n,)),
                w_out=take(f"{pre}.s6.w_out", (c, c)),
                b_out=take(f"{pre}.s6.b_out", (c,)),
            )
            if cfg.merge_mode == "concat_proj":
                merge = MergeWeights(
                    mode="concat_proj",
                    projection=take(f"{pre}.merge.projection", (2 * cfg.m * c, c)).astype(np.float64),
                    bias=take(f"{pre}.merge.bias", (c,)).astype(np.float64),
                )
            else:
                merge = MergeWeights(mode="sum")
            blocks.append(BlockWeights(s6=s6, merge=merge))
        layers.append(tuple(blocks))
    head = take("head.projection", (c, cfg.num_classes))
    return ModelWeights(stem=stem, blocks=tuple(layers), head=head)
