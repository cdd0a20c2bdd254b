"""
Dense tensor layers, reverse-mode gradients, Adam and the checkpoint codec

Layers are thin torch modules built on explicit forward functions so every
differentiable op can be gradient-checked on its own.

Checkpoint byte layout (all integers and floats little-endian):
    magic       8 bytes  b"NAVSIMCK"
    version     uint32
    meta_len    uint32, followed by meta_len bytes of UTF-8 JSON
    count       uint32
    count times:
        name_len uint16, name bytes (UTF-8)
        ndim     uint8, then ndim x uint32 dims
        values   prod(dims) x float32
Optimizer moments are stored as ordinary entries named "<param>/exp_avg" and
"<param>/exp_avg_sq"; the Adam step counter lives in the JSON metadata.
"""
import json
import logging
import math
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import CheckpointError, NonFiniteGradientError, ShapeMismatchError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"NAVSIMCK"
CHECKPOINT_VERSION = 1

DTYPES = {"float32": torch.float32, "float64": torch.float64}


def resolve_dtype(name: str) -> torch.dtype:
    return DTYPES[name]


def affine_forward(x: torch.Tensor, W: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """y = x W + b with x (B, I), W (I, O), b (O,)"""
    if x.dim() != 2 or W.dim() != 2 or b.dim() != 1:
        raise ShapeMismatchError(f"affine expects x (B, I), W (I, O), b (O,); got {tuple(x.shape)}, "
                                 f"{tuple(W.shape)}, {tuple(b.shape)}")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"affine shapes incompatible: x {tuple(x.shape)}, W {tuple(W.shape)}, "
                                 f"b {tuple(b.shape)}")
    return x @ W + b


def affine_backward(x: torch.Tensor, W: torch.Tensor, b: torch.Tensor,
                    grad_y: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Gradients (dx, dW, db) of sum(grad_y * affine_forward(x, W, b))"""
    return _vjp(lambda x_, W_, b_: affine_forward(x_, W_, b_), (x, W, b), grad_y)


def conv2d_forward(x: torch.Tensor, K: torch.Tensor, b: Optional[torch.Tensor] = None,
                   stride: int = 1) -> torch.Tensor:
    """Valid cross-correlation; x (N, C, H, W), K (O, C, kh, kw)"""
    if x.dim() != 4 or K.dim() != 4:
        raise ShapeMismatchError(f"conv2d expects 4-d input and kernel; got {tuple(x.shape)}, {tuple(K.shape)}")
    if x.shape[1] != K.shape[1]:
        raise ShapeMismatchError(f"conv2d channel mismatch: input {x.shape[1]}, kernel {K.shape[1]}")
    if K.shape[2] > x.shape[2] or K.shape[3] > x.shape[3]:
        raise ShapeMismatchError(f"kernel {tuple(K.shape[2:])} does not fit input {tuple(x.shape[2:])}")
    if b is not None and b.shape != (K.shape[0],):
        raise ShapeMismatchError(f"conv2d bias must have shape ({K.shape[0]},)")
    return F.conv2d(x, K, b, stride=stride)


def conv2d_backward(x: torch.Tensor, K: torch.Tensor, b: Optional[torch.Tensor], stride: int,
                    grad_y: torch.Tensor) -> Tuple[Optional[torch.Tensor], ...]:
    """Gradients (dx, dK, db) of sum(grad_y * conv2d_forward(x, K, b, stride))"""
    if b is None:
        dx, dK = _vjp(lambda x_, K_: conv2d_forward(x_, K_, None, stride), (x, K), grad_y)
        return dx, dK, None
    return _vjp(lambda x_, K_, b_: conv2d_forward(x_, K_, b_, stride), (x, K, b), grad_y)


def _vjp(fn: Callable, inputs: Sequence[torch.Tensor], grad_y: torch.Tensor):
    leaves = [t.detach().requires_grad_(True) for t in inputs]
    with torch.enable_grad():
        y = fn(*leaves)
        if y.shape != grad_y.shape:
            raise ShapeMismatchError(f"upstream gradient {tuple(grad_y.shape)} does not match output {tuple(y.shape)}")
        grads = torch.autograd.grad(y, leaves, grad_outputs=grad_y)
    return tuple(g.detach() for g in grads)


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.clamp_min(x, 0.0)


def dueling_aggregate(V: torch.Tensor, A: torch.Tensor) -> torch.Tensor:
    """Q = V + A - mean(A) per sample; V (B, 1), A (B, n_actions)"""
    if V.dim() != 2 or A.dim() != 2 or V.shape[1] != 1 or V.shape[0] != A.shape[0]:
        raise ShapeMismatchError(f"dueling_aggregate expects V (B, 1) and A (B, n); got "
                                 f"{tuple(V.shape)}, {tuple(A.shape)}")
    return V + A - A.mean(dim=1, keepdim=True)


def gradient_check(fn: Callable, inputs: Sequence[torch.Tensor], h: float = 1e-4, rtol: float = 1e-4) -> bool:
    """Central finite-difference check of fn's gradients (inputs should be float64)"""
    leaves = tuple(t.detach().clone().requires_grad_(True) for t in inputs)
    return torch.autograd.gradcheck(fn, leaves, eps=h, atol=1e-7, rtol=rtol, raise_exception=False)


class Affine(nn.Module):
    """Fully connected layer storing W as (in, out)"""

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(in_features, out_features))
        self.bias = nn.Parameter(torch.empty(out_features))

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return affine_forward(x, self.weight, self.bias)


class Conv2d(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1):
        super().__init__()
        self.stride = stride
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel, kernel))
        self.bias = nn.Parameter(torch.empty(out_channels))

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1] * self.weight.shape[2] * self.weight.shape[3]

    def output_size(self, size: int) -> int:
        return (size - self.weight.shape[2]) // self.stride + 1

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return conv2d_forward(x, self.weight, self.bias, self.stride)


def fan_in_uniform_(module: nn.Module, generator: torch.Generator) -> nn.Module:
    """Initialize every Affine / Conv2d with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) in module order"""
    with torch.no_grad():
        for layer in module.modules():
            if isinstance(layer, (Affine, Conv2d)):
                bound = 1.0 / math.sqrt(layer.fan_in)
                layer.weight.uniform_(-bound, bound, generator=generator)
                layer.bias.uniform_(-bound, bound, generator=generator)
    return module


def seeded_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def check_finite(name: str, tensor: torch.Tensor) -> None:
    if not torch.isfinite(tensor).all():
        raise NonFiniteGradientError(name)


class ParamSet:
    """Named parameters and their Adam moments"""

    def __init__(self, named_params: Iterable[Tuple[str, nn.Parameter]], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params: "OrderedDict[str, nn.Parameter]" = OrderedDict()
        for name, p in named_params:
            if name in self.params:
                raise ValueError(f"Duplicate parameter name: {name}")
            self.params[name] = p
        self.optimizer = torch.optim.Adam(list(self.params.values()), lr=lr, betas=betas, eps=eps)

    @classmethod
    def from_module(cls, module: nn.Module, **kwargs) -> "ParamSet":
        return cls(module.named_parameters(), **kwargs)

    def names(self):
        return list(self.params.keys())

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {k: tuple(v.shape) for k, v in self.params.items()}

    @property
    def step_count(self) -> int:
        for p in self.params.values():
            state = self.optimizer.state.get(p)
            if state and "step" in state:
                return int(float(state["step"]))
        return 0

    def moments(self) -> Dict[str, torch.Tensor]:
        out = {}
        for name, p in self.params.items():
            state = self.optimizer.state.get(p)
            if state and "exp_avg" in state:
                out[f"{name}/exp_avg"] = state["exp_avg"]
                out[f"{name}/exp_avg_sq"] = state["exp_avg_sq"]
        return out

    def load_moments(self, tensors: Dict[str, torch.Tensor], step: int) -> None:
        state = {}
        for i, (name, p) in enumerate(self.params.items()):
            if f"{name}/exp_avg" not in tensors:
                continue
            state[i] = {
                "step": torch.tensor(float(step)),
                "exp_avg": tensors[f"{name}/exp_avg"].to(p.dtype).reshape(p.shape).clone(),
                "exp_avg_sq": tensors[f"{name}/exp_avg_sq"].to(p.dtype).reshape(p.shape).clone(),
            }
        sd = self.optimizer.state_dict()
        sd["state"] = state
        self.optimizer.load_state_dict(sd)


def adam_step(params: ParamSet, grads: Optional[Dict[str, torch.Tensor]] = None,
              lr: Optional[float] = None, betas: Optional[Tuple[float, float]] = None,
              eps: Optional[float] = None) -> ParamSet:
    """
    One bias-corrected Adam update

    Args:
        params: Parameters and optimizer state
        grads: Gradients by name; defaults to each parameter's .grad
        lr, betas, eps: Optional overrides of the optimizer settings

    Returns:
        The same ParamSet, updated in place

    Raises:
        NonFiniteGradientError: a gradient holds NaN or inf (names the parameter)
    """
    for name, p in params.params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            continue
        if tuple(g.shape) != tuple(p.shape):
            raise ShapeMismatchError(f"gradient for '{name}' has shape {tuple(g.shape)}, expected {tuple(p.shape)}")
        check_finite(name, g)
        if grads is not None:
            p.grad = g.detach().to(p.dtype).clone()
    for group in params.optimizer.param_groups:
        if lr is not None:
            group["lr"] = lr
        if betas is not None:
            group["betas"] = betas
        if eps is not None:
            group["eps"] = eps
    params.optimizer.step()
    return params


def save_checkpoint(path: Union[str, Path], tensors: Dict[str, torch.Tensor], meta: Optional[Dict] = None) -> None:
    """Write named tensors and JSON metadata in the navsim checkpoint format"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(meta_bytes)), meta_bytes,
              struct.pack("<I", len(tensors))]
    for name, t in tensors.items():
        name_bytes = name.encode("utf-8")
        arr = t.detach().cpu().numpy().astype("<f4")
        chunks.append(struct.pack("<H", len(name_bytes)) + name_bytes)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    tmp.replace(path)
    logger.info(f"Saved checkpoint {path} ({len(tensors)} tensors)")


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, torch.Tensor], Dict]:
    """Read a checkpoint written by save_checkpoint"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    data = path.read_bytes()
    try:
        if data[:8] != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path} is not a navsim checkpoint")
        version, meta_len = struct.unpack_from("<II", data, 8)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        offset = 16
        meta = json.loads(data[offset:offset + meta_len].decode("utf-8"))
        offset += meta_len
        (count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        tensors: Dict[str, torch.Tensor] = OrderedDict()
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", data, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset).reshape(shape)
            offset += 4 * n
            tensors[name] = torch.from_numpy(arr.astype(np.float32))
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path} is corrupt: {e}") from e
    if offset != len(data):
        raise CheckpointError(f"{path} has {len(data) - offset} trailing bytes")
    return tensors, meta


def module_tensors(module: nn.Module, params: Optional[ParamSet] = None) -> Dict[str, torch.Tensor]:
    """Parameters plus Adam moments, ready for save_checkpoint"""
    out: Dict[str, torch.Tensor] = OrderedDict((k, v.detach()) for k, v in module.named_parameters())
    if params is not None:
        out.update(params.moments())
    return out


def restore_module(module: nn.Module, tensors: Dict[str, torch.Tensor], params: Optional[ParamSet] = None,
                   step: int = 0) -> None:
    """Copy saved values into a module with matching names and shapes"""
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name not in tensors:
                raise CheckpointError(f"Checkpoint is missing parameter '{name}'")
            t = tensors[name]
            if tuple(t.shape) != tuple(p.shape):
                raise CheckpointError(f"Parameter '{name}' has shape {tuple(t.shape)}, expected {tuple(p.shape)}")
            p.copy_(t.to(p.dtype))
    if params is not None:
        params.load_moments(tensors, step)
