"""MLP surface maps from the plane to R^2 or R^3, and their checkpoint format.

Wiring for ``depth >= 2``::

    x = act(p @ W0 + b0)                  # lift 2 -> width
    x = x + act(x @ Wi + bi)              # depth - 2 hidden blocks (residual)
    y = x @ Wk + bk  [+ (p, 0)]           # projection width -> out_dim

Without ``residual`` the hidden blocks are plain ``x = act(x @ Wi + bi)``.
``depth == 1`` is a single affine layer. The optional input skip adds the
input point (zero padded to ``out_dim``) to the output, which makes the
identity map exactly representable.

Weights are stored as ``(fan_in, fan_out)`` so a layer is ``x @ W + b``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff.dual import ACTIVATIONS, Dual2
from .autodiff.tape import Tape, Var
from .errors import (
    CheckpointVersionError,
    CorruptCheckpointError,
    EvaluationError,
    ShapeMismatchError,
)

MAGIC = b"NSM1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    depth: int = 10
    width: int = 256
    out_dim: int = 3
    in_dim: int = 2
    residual: bool = True
    activation: str = "softplus"
    input_skip: bool = False
    final_scale: float = 1.0

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ValueError(f"depth and width must be >= 1, got {self.depth}, {self.width}")
        if self.in_dim != 2:
            raise ValueError("neural maps take points of the 2D domain (in_dim=2)")
        if self.out_dim not in (2, 3):
            raise ValueError(f"out_dim must be 2 or 3, got {self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def layer_shapes(self):
        if self.depth == 1:
            return [(self.in_dim, self.out_dim)]
        shapes = [(self.in_dim, self.width)]
        shapes += [(self.width, self.width)] * (self.depth - 2)
        shapes.append((self.width, self.out_dim))
        return shapes

    def parameter_count(self):
        return sum(i * o + o for i, o in self.layer_shapes())


# surface map used for every overfit in the experiments
SURFACE_ARCH = Architecture(depth=10, width=256, out_dim=3, residual=True)
# warp h between domains
WARP_ARCH = Architecture(depth=4, width=128, out_dim=2, residual=False, input_skip=True, final_scale=1e-2)


@dataclass
class NeuralMap:
    arch: Architecture
    layers: list
    metadata: dict = field(default_factory=dict)

    @property
    def out_dim(self):
        return self.arch.out_dim

    # -- parameters ------------------------------------------------------

    def parameters(self):
        """Flat float64 copy of all weights and biases (W0, b0, W1, b1, ...)."""
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in self.layers])

    def set_parameters(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.arch.parameter_count():
            raise ValueError(f"expected {self.arch.parameter_count()} parameters, got {flat.size}")
        layers, k = [], 0
        for i, o in self.arch.layer_shapes():
            w = flat[k : k + i * o].reshape(i, o).copy()
            k += i * o
            b = flat[k : k + o].copy()
            k += o
            layers.append((w, b))
        self.layers = layers

    def copy(self):
        return NeuralMap(self.arch, [(w.copy(), b.copy()) for w, b in self.layers], dict(self.metadata))

    def bind(self, tape: Tape):
        """Register every weight and bias on ``tape``; returns taped layers."""
        return [
            (tape.param(w, name=f"W{k}"), tape.param(b, name=f"b{k}")) for k, (w, b) in enumerate(self.layers)
        ]

    # -- evaluation ------------------------------------------------------

    def forward(self, x, layers=None):
        """Evaluate on arrays, taped Vars or Dual2 numbers.

        ``layers`` overrides the stored weights (e.g. with taped copies from
        :meth:`bind`). ``x`` has shape ``(batch, 2)``.
        """
        layers = self.layers if layers is None else layers
        act = ACTIVATIONS[self.arch.activation]
        last = len(layers) - 1
        h = x
        for k, (w, b) in enumerate(layers):
            z = h @ w + b
            if k == last:
                h = z
            elif k == 0 or not self.arch.residual:
                h = act(z)
            else:
                h = h + act(z)
            _check_finite(h, k)
        if self.arch.input_skip:
            h = h + x @ _skip_matrix(self.arch.out_dim)
        return h

    def __call__(self, points):
        return evaluate(self, points)


def _skip_matrix(out_dim):
    s = np.zeros((2, out_dim))
    s[0, 0] = s[1, 1] = 1.0
    return s


def _raw(x):
    return x.value if isinstance(x, Var) else x


def _check_finite(h, layer):
    parts = (h.value, h.du, h.dv) if isinstance(h, Dual2) else (h,)
    for part in parts:
        if not np.all(np.isfinite(_raw(part))):
            raise EvaluationError(f"non-finite value produced by layer {layer}", layer=layer)


def build(arch: Architecture, seed: int = 0) -> NeuralMap:
    """Initialize weights uniformly in +-sqrt(6 / (fan_in + fan_out)), biases at zero."""
    rng = np.random.default_rng(seed)
    layers = []
    shapes = arch.layer_shapes()
    for k, (fan_in, fan_out) in enumerate(shapes):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if k == len(shapes) - 1:
            w *= arch.final_scale
        layers.append((w, np.zeros(fan_out)))
    return NeuralMap(arch, layers)


def evaluate(nmap: NeuralMap, points) -> np.ndarray:
    """Map a batch of domain points ``(B, 2)`` (or a single point) to ``R^n``."""
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    out = nmap.forward(np.atleast_2d(points))
    return out[0] if single else out


def linear_map(matrix, offset=None, out_dim=None) -> NeuralMap:
    """A depth-1 map realizing ``p -> matrix @ p + offset`` exactly."""
    matrix = np.asarray(matrix, dtype=np.float64)
    out_dim = matrix.shape[0] if out_dim is None else out_dim
    offset = np.zeros(out_dim) if offset is None else np.asarray(offset, dtype=np.float64)
    arch = Architecture(depth=1, width=1, out_dim=out_dim, residual=False)
    return NeuralMap(arch, [(matrix.T.copy(), offset.copy())])


# -- checkpoints ----------------------------------------------------------


def save(nmap: NeuralMap, path, **metadata):
    """Write an NSM1 checkpoint: magic, u32 header length, JSON header, f64 payload."""
    meta = dict(nmap.metadata)
    meta.update(metadata)
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": asdict(nmap.arch),
        "parameter_count": nmap.arch.parameter_count(),
        "metadata": meta,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = nmap.parameters().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load(path, out_dim=None) -> NeuralMap:
    """Read a checkpoint; ``out_dim`` asserts the kind of map the caller needs."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise CorruptCheckpointError(f"{path}: file too short")
    magic = data[:4]
    if magic[:3] == MAGIC[:3] and magic != MAGIC:
        raise CheckpointVersionError(f"{path}: unsupported format {magic!r}")
    if magic != MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic {magic!r}")
    (hlen,) = struct.unpack("<I", data[4:8])
    if 8 + hlen > len(data):
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
        arch = Architecture(**header["architecture"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {header.get('format_version')}")
    payload = data[8 + hlen :]
    count = arch.parameter_count()
    if len(payload) != 8 * count or header.get("parameter_count") != count:
        raise CorruptCheckpointError(f"{path}: expected {count} parameters, payload has {len(payload)} bytes")
    if out_dim is not None and arch.out_dim != out_dim:
        raise ShapeMismatchError(f"{path}: map has out_dim {arch.out_dim}, expected {out_dim}")
    nmap = NeuralMap(arch, [], header.get("metadata", {}))
    nmap.set_parameters(np.frombuffer(payload, dtype="<f8").astype(np.float64))
    return nmap
