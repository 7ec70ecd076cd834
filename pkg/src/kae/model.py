"""Single-hidden-layer autoencoder (d_input -> d_latent -> d_input) and checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .layers import LayerParams, LayerSpec, backward, count_parameters, forward, init_layer
from .ndcore import RngStream, as_matrix

__all__ = [
    "FAMILIES",
    "AutoencoderConfig",
    "Autoencoder",
    "build",
    "mse",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
    "CheckpointMagicError",
    "CheckpointVersionError",
    "CheckpointPayloadError",
]

# public family name -> layer kind
FAMILIES = {
    "ae": "affine",
    "kae": "polynomial",
    "kan": "bspline",
    "fourierkan": "fourier",
    "wavkan": "wavelet",
}
_KIND_TO_FAMILY = {v: k for k, v in FAMILIES.items()}

MAGIC = b"KAEBNCH1"
FORMAT_VERSION = 1


def resolve_kind(family: str) -> str:
    name = family.lower()
    if name in FAMILIES:
        return FAMILIES[name]
    if name in _KIND_TO_FAMILY:
        return name
    raise ValueError(f"unknown model family {family!r}; expected one of {sorted(FAMILIES)}")


@dataclass(frozen=True)
class AutoencoderConfig:
    d_input: int
    d_latent: int
    family: str = "kae"
    order_p: int = 3
    grid_size: int = 5
    spline_order: int = 3
    grid_range: tuple = (-1.0, 1.0)
    apply_sigmoid: bool | None = None
    latent_sigmoid: bool = False
    poly_init: str = "linear"
    master_seed: int = 2024

    def __post_init__(self):
        object.__setattr__(self, "family", _KIND_TO_FAMILY[resolve_kind(self.family)])
        object.__setattr__(self, "grid_range", tuple(float(v) for v in self.grid_range))
        if self.d_latent < 1 or self.d_latent >= self.d_input:
            raise ValueError(f"need 0 < d_latent < d_input, got {self.d_latent} / {self.d_input}")

    @property
    def kind(self) -> str:
        return FAMILIES[self.family]

    def layer_spec(self, d_in: int, d_out: int, role: str = "decoder") -> LayerSpec:
        """Spec for one side; the encoder keeps its sigmoid only if ``latent_sigmoid``."""
        apply_sigmoid = self.apply_sigmoid
        if role == "encoder" and not self.latent_sigmoid:
            apply_sigmoid = False
        return LayerSpec(
            kind=self.kind,
            d_in=d_in,
            d_out=d_out,
            order_p=self.order_p if self.kind == "polynomial" else 1,
            grid_size=self.grid_size,
            spline_order=self.spline_order,
            grid_range=self.grid_range,
            apply_sigmoid=apply_sigmoid,
            poly_init=self.poly_init,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_range"] = list(self.grid_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: (tuple(v) if k == "grid_range" else v) for k, v in d.items() if k in known})


def mse(a, b) -> float:
    """Mean over every entry of the squared difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("mse of empty arrays")
    d = a - b
    return float(np.einsum("ij,ij->", d, d) / d.size) if d.ndim == 2 else float((d * d).sum() / d.size)


class Autoencoder:
    """Encoder layer ``d_input -> d_latent`` followed by decoder ``d_latent -> d_input``."""

    def __init__(self, config: AutoencoderConfig, encoder: LayerParams, decoder: LayerParams):
        if encoder.spec.d_out != config.d_latent or decoder.spec.d_in != config.d_latent:
            raise ValueError("encoder/decoder latent widths disagree with config")
        if encoder.spec.d_in != config.d_input or decoder.spec.d_out != config.d_input:
            raise ValueError("encoder/decoder input widths disagree with config")
        self.config = config
        self.encoder = encoder
        self.decoder = decoder

    @property
    def layers(self):
        return (self.encoder, self.decoder)

    def named_tensors(self):
        """Canonical parameter enumeration: encoder tensors, then decoder tensors."""
        for prefix, layer in (("encoder", self.encoder), ("decoder", self.decoder)):
            for name, arr in layer.tensors.items():
                yield f"{prefix}.{name}", arr

    def n_parameters(self) -> int:
        return self.encoder.size() + self.decoder.size()

    def _check(self, X):
        X = as_matrix(X, "X")
        if X.shape[1] != self.config.d_input:
            raise ValueError(f"model expects {self.config.d_input} features, got {X.shape[1]}")
        return X

    def encode(self, X) -> np.ndarray:
        return forward(self.encoder, self._check(X))[0]

    def decode(self, Z) -> np.ndarray:
        Z = as_matrix(Z, "Z")
        if Z.shape[1] != self.config.d_latent:
            raise ValueError(f"decoder expects {self.config.d_latent} latent columns, got {Z.shape[1]}")
        return forward(self.decoder, Z)[0]

    def reconstruct(self, X) -> np.ndarray:
        return self.decode(self.encode(X))

    def loss_and_grads(self, X):
        """MSE reconstruction loss and its gradient for both layers."""
        X = self._check(X)
        Z, enc_cache = forward(self.encoder, X)
        R, dec_cache = forward(self.decoder, Z)
        diff = R - X
        loss = float(np.einsum("ij,ij->", diff, diff) / diff.size)
        dR = (2.0 / diff.size) * diff
        dZ, dec_grads = backward(self.decoder, dec_cache, dR)
        _, enc_grads = backward(self.encoder, enc_cache, dZ)
        return loss, enc_grads, dec_grads

    def copy(self) -> "Autoencoder":
        return Autoencoder(self.config, self.encoder.copy(), self.decoder.copy())

    def __repr__(self):
        c = self.config
        extra = f", p={c.order_p}" if c.kind == "polynomial" else ""
        return f"Autoencoder({c.family}{extra}, {c.d_input}-{c.d_latent}-{c.d_input}, params={self.n_parameters()})"


def build(config: AutoencoderConfig) -> Autoencoder:
    stream = RngStream.for_concern(config.master_seed, "init")
    enc = init_layer(config.layer_spec(config.d_input, config.d_latent, "encoder"), stream)
    dec = init_layer(config.layer_spec(config.d_latent, config.d_input), stream)
    return Autoencoder(config, enc, dec)


def total_parameter_count(config: AutoencoderConfig) -> int:
    return (count_parameters(config.layer_spec(config.d_input, config.d_latent, "encoder"))
            + count_parameters(config.layer_spec(config.d_latent, config.d_input)))


class CheckpointError(Exception):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointPayloadError(CheckpointError):
    pass


def save_checkpoint(model: Autoencoder, path, optimizer=None, metadata: dict | None = None) -> Path:
    """Write ``model`` (and optionally Adam state) to ``path``.

    Layout: 8-byte magic ``KAEBNCH1``; uint64 little-endian header length;
    UTF-8 JSON header; then float64 little-endian payloads in header order
    (every tensor, then optimizer ``m`` and ``v`` if present).
    """
    path = Path(path)
    tensors = list(model.named_tensors())
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "family": model.config.family,
        "seed": model.config.master_seed,
        "layers": {"encoder": model.encoder.spec.to_dict(), "decoder": model.decoder.spec.to_dict()},
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
        "optimizer": None,
        "metadata": metadata or {},
    }
    payloads = [a for _, a in tensors]
    if optimizer is not None:
        header["optimizer"] = optimizer.header()
        payloads += [optimizer.m, optimizer.v]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in payloads:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_checkpoint(path):
    """Return ``(model, header, optimizer_buffers)``; buffers are ``None`` if absent."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointMagicError(f"{path}: bad magic {raw[:8]!r}, expected {MAGIC!r}")
    if len(raw) < 16:
        raise CheckpointPayloadError(f"{path}: truncated before header length")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if 16 + hlen > len(raw):
        raise CheckpointPayloadError(f"{path}: header declares {hlen} bytes, file too short")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointPayloadError(f"{path}: unreadable header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {header.get('format_version')!r}, expected {FORMAT_VERSION}")

    config = AutoencoderConfig.from_dict(header["config"])
    model = build(config)
    expected = [(n, list(a.shape)) for n, a in model.named_tensors()]
    declared = [(t["name"], list(t["shape"])) for t in header["tensors"]]
    if declared != expected:
        raise CheckpointPayloadError(f"{path}: tensor table does not match config {config.family}")
    n_floats = sum(int(np.prod(s)) for _, s in declared)
    opt = header.get("optimizer")
    if opt is not None:
        n_floats += 2 * int(opt["size"])
    body = raw[16 + hlen:]
    if len(body) != 8 * n_floats:
        raise CheckpointPayloadError(
            f"{path}: payload has {len(body)} bytes, header declares {8 * n_floats}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    off = 0
    for name, arr in model.named_tensors():
        arr[...] = flat[off:off + arr.size].reshape(arr.shape)
        off += arr.size
    buffers = None
    if opt is not None:
        size = int(opt["size"])
        buffers = (flat[off:off + size].copy(), flat[off + size:off + 2 * size].copy())
    return model, header, buffers


def load_checkpoint(path) -> Autoencoder:
    return read_checkpoint(path)[0]
