"""Layers of the enhancement network.

Functional ops follow fixed conventions:
    - "same" convolution padding split floor-left / ceil-right, for any
      stride (torch only offers symmetric "same" at stride 1);
    - transposed convolutions receive their exact output shape and are
      the adjoint of `conv2d` with the same weights;
    - 2x2 max pooling routes gradients to the first maximum in
      row-major order;
    - batch normalisation keeps running statistics with momentum 0.99
      (running = 0.99 * running + 0.01 * batch);
    - dropout is inverted and draws its mask from an explicit generator.

Gradients come from autograd. `forward_with_cache` and `backward`
expose a layer's backward pass on its own, which is what the numerical
gradient checks use.

Every op asserts that its output is finite.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Sequence, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from source.utils.errors import (
    DegenerateBatch,
    MissingForwardCache,
    NonFiniteGradient,
    NonFiniteValue,
    OddSpatialDim,
    ShapeMismatch,
    UnreachableOutputShape,
    ValidationError,
)

LEAKY_ALPHA = 0.2
DROPOUT_P = 0.25
BN_MOMENTUM = 0.99
BN_EPS = 1e-5
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

Pair = Union[int, tuple[int, int]]


def _pair(value: Pair) -> tuple[int, int]:
    return (value, value) if isinstance(value, int) else tuple(value)


def _finite(t: torch.Tensor, op: str) -> torch.Tensor:
    if not torch.isfinite(t).all():
        raise NonFiniteValue(f"{op} produced NaN or Inf.")
    return t


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) padding so that the output has ceil(size / stride) cells."""

    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv2d(x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor], stride: Pair = 1) -> torch.Tensor:
    """Cross-correlation with "same" padding.

    Args:
        x : torch.Tensor
            Input of shape (N, C, H, W).
        weight : torch.Tensor
            Filters of shape (F, C, kh, kw).
        bias : torch.Tensor or None
            Shape (F,).
        stride : int or (int, int)

    Returns:
        torch.Tensor of shape (N, F, ceil(H / sh), ceil(W / sw)).
    """

    if x.dim() != 4 or weight.dim() != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv2d input {tuple(x.shape)} does not match filters {tuple(weight.shape)}.")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatch(f"conv2d bias {tuple(bias.shape)} does not match {weight.shape[0]} filters.")

    sh, sw = _pair(stride)
    kh, kw = weight.shape[-2:]
    top, bottom = same_padding(x.shape[2], kh, sh)
    left, right = same_padding(x.shape[3], kw, sw)

    y = F.conv2d(F.pad(x, (left, right, top, bottom)), weight, bias, stride=(sh, sw))

    return _finite(y, 'conv2d')


def conv_transpose2d(
        x: torch.Tensor,
        weight: torch.Tensor,
        bias: Optional[torch.Tensor],
        stride: Pair,
        output_shape: tuple[int, int],
    ) -> torch.Tensor:
    """Adjoint of `conv2d` producing exactly `output_shape`.

    `weight` has the `conv2d` layout (F, C, kh, kw) read as
    (in_channels, out_channels, kh, kw). The output shape is reachable
    when `conv2d` applied to it would give the input's spatial shape.
    """

    if x.dim() != 4 or weight.dim() != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatch(f"conv_transpose2d input {tuple(x.shape)} does not match filters {tuple(weight.shape)}.")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"conv_transpose2d bias {tuple(bias.shape)} does not match {weight.shape[1]} channels.")

    sh, sw = _pair(stride)
    kh, kw = weight.shape[-2:]
    out_h, out_w = output_shape
    in_h, in_w = x.shape[-2:]
    if -(-out_h // sh) != in_h or -(-out_w // sw) != in_w:
        raise UnreachableOutputShape(
            f"Output {out_h}x{out_w} is not reachable from {in_h}x{in_w} with stride {sh}x{sw}."
        )

    top, bottom = same_padding(out_h, kh, sh)
    left, right = same_padding(out_w, kw, sw)

    # Transposed valid convolution, zero-extended to the padded extent, then cropped.
    full = F.conv_transpose2d(x, weight, None, stride=(sh, sw))
    full = F.pad(full, (0, out_w + left + right - full.shape[3], 0, out_h + top + bottom - full.shape[2]))
    y = full[:, :, top:top + out_h, left:left + out_w]
    if bias is not None:
        y = y + bias.view(1, -1, 1, 1)

    return _finite(y, 'conv_transpose2d')


def maxpool2x2(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """2x2 max pooling with stride 2; returns values and argmax indices."""

    if x.shape[-2] % 2 or x.shape[-1] % 2:
        raise OddSpatialDim(f"maxpool2x2 needs even spatial dims, got {tuple(x.shape[-2:])}.")

    y, indices = F.max_pool2d(x, kernel_size=2, stride=2, return_indices=True)

    return _finite(y, 'maxpool2x2'), indices


@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics."""

    gamma: torch.Tensor
    beta: torch.Tensor
    running_mean: torch.Tensor
    running_var: torch.Tensor
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    training: bool = True


def batchnorm(x: torch.Tensor, state: BatchNormState) -> torch.Tensor:
    """Batch normalisation over (N, H, W) per channel.

    In training mode the running statistics of `state` are updated in
    place; in inference mode they normalise the input.
    """

    if state.training and x.shape[0] < 2:
        raise DegenerateBatch(f"Batch normalisation in training mode needs at least 2 examples, got {x.shape[0]}.")

    y = F.batch_norm(
        x,
        state.running_mean,
        state.running_var,
        weight=state.gamma,
        bias=state.beta,
        training=state.training,
        momentum=1.0 - state.momentum,
        eps=state.eps,
    )

    return _finite(y, 'batchnorm')


def leaky_relu(x: torch.Tensor, alpha: float = LEAKY_ALPHA) -> torch.Tensor:
    # Gradient at 0 is alpha.
    return _finite(F.leaky_relu(x, negative_slope=alpha), 'leaky_relu')


def relu(x: torch.Tensor) -> torch.Tensor:
    return _finite(F.relu(x), 'relu')


def dropout(x: torch.Tensor, p: float = DROPOUT_P, training: bool = True, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Inverted dropout; identity in inference mode or when p == 0."""

    if not 0 <= p < 1:
        raise ValidationError(f"Dropout probability must lie in [0, 1), got {p}.")
    if not training or p == 0:
        return x

    device = generator.device if generator is not None else x.device
    keep = (torch.rand(x.shape, generator=generator, dtype=x.dtype, device=device) >= p).to(x.device)

    return _finite(x * keep / (1.0 - p), 'dropout')


def dense(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Affine map x @ W + b with W of shape (D, M)."""

    if x.dim() != 2 or weight.dim() != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeMismatch(
            f"dense input {tuple(x.shape)}, weight {tuple(weight.shape)}, bias {tuple(bias.shape)} do not match."
        )

    return _finite(torch.addmm(bias, x, weight), 'dense')


def xavier_init(
        shape: Sequence[int],
        fan_in: int,
        fan_out: int,
        seed: Union[int, torch.Generator],
        dtype: torch.dtype = torch.float32,
    ) -> torch.Tensor:
    """I.i.d. uniform samples on +/- sqrt(6 / (fan_in + fan_out))."""

    if fan_in <= 0 or fan_out <= 0:
        raise ValidationError(f"Fans must be positive, got fan_in={fan_in}, fan_out={fan_out}.")

    generator = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(seed)
    bound = math.sqrt(6.0 / (fan_in + fan_out))

    return torch.empty(tuple(shape), dtype=dtype).uniform_(-bound, bound, generator=generator)


def mask_mse_loss(predicted: torch.Tensor, target: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean squared error over all T*F mask cells.

    Returns:
        (J, dJ/dpredicted) where J keeps the autograd graph and the
        gradient is 2 (predicted - target) / TF.
    """

    if predicted.shape != target.shape:
        raise ShapeMismatch(f"Predicted mask {tuple(predicted.shape)} and target {tuple(target.shape)} differ.")
    if predicted.numel() == 0:
        raise ShapeMismatch("Masks are empty.")

    loss = _finite(F.mse_loss(predicted, target), 'mask_mse_loss')
    gradient = 2.0 * (predicted.detach() - target) / predicted.numel()

    return loss, gradient


class Adam(torch.optim.Adam):
    """Adam (beta1 0.9, beta2 0.999, eps 1e-8) refusing non-finite gradients."""

    def __init__(self, params, lr: float):
        super().__init__(params, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)

    @torch.no_grad()
    def step(self, closure: Optional[Callable] = None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group in self.param_groups:
            for param in group['params']:
                if param.grad is not None and not torch.isfinite(param.grad).all():
                    raise NonFiniteGradient(f"Gradient of a parameter with shape {tuple(param.shape)} is not finite.")

        super().step()

        return loss


def adam_step(params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor], optimizer: Adam):
    """One bias-corrected Adam update of `params` with explicit `grads`.

    The optimizer's per-parameter state (step, exp_avg, exp_avg_sq)
    carries the first and second moments between calls.
    """

    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients.")
    for param, grad in zip(params, grads):
        if param.shape != grad.shape:
            raise ShapeMismatch(f"Gradient {tuple(grad.shape)} does not match parameter {tuple(param.shape)}.")
        param.grad = grad.detach().clone()

    optimizer.step()


@dataclass
class ForwardCache:
    """Inputs and output of one op, kept for its backward pass."""

    inputs: tuple
    output: torch.Tensor
    consumed: bool = field(default=False)


def forward_with_cache(op: Callable, *inputs, **kwargs) -> ForwardCache:
    """Run `op` recording what `backward` needs.

    Floating tensors among `inputs` become leaves whose gradients
    `backward` returns, in the same order.
    """

    leaves = tuple(
        t.detach().requires_grad_(True) if isinstance(t, torch.Tensor) and t.is_floating_point() else t
        for t in inputs
    )
    with torch.enable_grad():
        output = op(*leaves, **kwargs)
    if isinstance(output, tuple):
        output = output[0]

    return ForwardCache(inputs=leaves, output=output)


def backward(cache: Optional[ForwardCache], grad_output: torch.Tensor) -> tuple:
    """Gradients of a cached op with respect to each tensor input.

    Non-tensor inputs get `None`; tensors the op ignored get zeros.
    """

    if cache is None or cache.consumed:
        raise MissingForwardCache("No forward cache available for the backward pass.")
    if grad_output.shape != cache.output.shape:
        raise ShapeMismatch(f"Upstream gradient {tuple(grad_output.shape)} does not match output {tuple(cache.output.shape)}.")

    tensors = [t for t in cache.inputs if isinstance(t, torch.Tensor) and t.requires_grad]
    grads = torch.autograd.grad(cache.output, tensors, grad_output, allow_unused=True)
    cache.consumed = True

    filled = iter([g if g is not None else torch.zeros_like(t) for g, t in zip(grads, tensors)])
    return tuple(
        next(filled) if isinstance(t, torch.Tensor) and t.requires_grad else None
        for t in cache.inputs
    )


class Conv2d(nn.Module):
    """Same-padded convolution with Xavier weights and zero bias."""

    def __init__(self, in_channels: int, out_channels: int, kernel: Pair, stride: Pair, generator: torch.Generator):
        super().__init__()

        kh, kw = _pair(kernel)
        self.stride = _pair(stride)
        self.weight = nn.Parameter(xavier_init(
            (out_channels, in_channels, kh, kw),
            fan_in=in_channels * kh * kw,
            fan_out=out_channels * kh * kw,
            seed=generator,
        ))
        self.bias = nn.Parameter(torch.zeros(out_channels))

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, self.stride)


class ConvTranspose2d(nn.Module):
    """Transposed convolution with an explicit output shape per call."""

    def __init__(self, in_channels: int, out_channels: int, kernel: Pair, stride: Pair, generator: torch.Generator):
        super().__init__()

        kh, kw = _pair(kernel)
        self.stride = _pair(stride)
        self.weight = nn.Parameter(xavier_init(
            (in_channels, out_channels, kh, kw),
            fan_in=in_channels * kh * kw,
            fan_out=out_channels * kh * kw,
            seed=generator,
        ))
        self.bias = nn.Parameter(torch.zeros(out_channels))

    def forward(self, x, output_shape: tuple[int, int]):
        return conv_transpose2d(x, self.weight, self.bias, self.stride, output_shape)


class BatchNorm(nn.Module):

    def __init__(self, channels: int):
        super().__init__()

        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))
        self.register_buffer('running_mean', torch.zeros(channels))
        self.register_buffer('running_var', torch.ones(channels))

    def forward(self, x):
        state = BatchNormState(self.gamma, self.beta, self.running_mean, self.running_var, training=self.training)
        return batchnorm(x, state)


class Dropout(nn.Module):
    """Dropout drawing from its own seeded generator."""

    def __init__(self, p: float, seed: int):
        super().__init__()

        self.p = p
        self.generator = torch.Generator().manual_seed(seed)

    def forward(self, x):
        return dropout(x, self.p, self.training, self.generator)


class Dense(nn.Module):

    def __init__(self, in_features: int, out_features: int, generator: torch.Generator):
        super().__init__()

        self.weight = nn.Parameter(xavier_init((in_features, out_features), in_features, out_features, seed=generator))
        self.bias = nn.Parameter(torch.zeros(out_features))

    def forward(self, x):
        return dense(x, self.weight, self.bias)
