from dataclasses import dataclass, field
import torch
import torch.nn as nn
from ciml.common import (DTYPE, LOGVAR_MIN, LOGVAR_MAX, DataError,
                         NumericError, ConfigError, torch_generator)

__all__ = [ "EncoderSpec", "Encoder", "StochasticEncoding", "encode_view",
            "encode_stochastic", "sample", "as_tensor", ]

ACTIVATIONS = {
    "identity": nn.Identity,
    "relu": nn.ReLU,
    "elu": nn.ELU,
    "tanh": nn.Tanh,
    "softplus": nn.Softplus,
}


@dataclass
class EncoderSpec:
    """Architecture of an encoder network.

    Attributes:
        input_dim: Width of the input.
        hidden_dims: Widths of the hidden layers.
        output_dim: Width of the representation.
        activation: Name of the activation after every hidden layer.
        stochastic: Whether the encoder emits Gaussian posterior parameters
            (mean and log-variance) instead of a deterministic feature.
        logvar_min: Lower clamp of the log-variance.
        logvar_max: Upper clamp of the log-variance.
    """

    input_dim: int
    hidden_dims: list = field(default_factory=list)
    output_dim: int = 1
    activation: str = "elu"
    stochastic: bool = False
    logvar_min: float = LOGVAR_MIN
    logvar_max: float = LOGVAR_MAX

    def __post_init__(self):
        dims = [ self.input_dim, self.output_dim ] + list(self.hidden_dims)
        if any(dd < 1 for dd in dims):
            raise ConfigError("Encoder dimensions must be positive, got {}"
                              .format(dims))
        if self.activation not in ACTIVATIONS:
            raise ConfigError("Unknown activation '{}'".format(self.activation))
        if self.logvar_min >= self.logvar_max:
            raise ConfigError("Log-variance clamp bounds must be increasing")


@dataclass
class StochasticEncoding:
    """Diagonal Gaussian posterior (batch x d_z) given by mean and standard
    deviation."""

    mean: torch.Tensor
    std: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise DataError("Mean shape {} and std shape {} disagree".format(
                tuple(self.mean.shape), tuple(self.std.shape)))
        if self.std.numel() and not bool(torch.all(self.std > 0.0)):
            raise NumericError("Posterior standard deviation must be positive")


class Encoder(nn.Module):
    """Multi-layer perceptron encoder, deterministic or with Gaussian heads."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        layers = []
        width = spec.input_dim
        for hidden in spec.hidden_dims:
            layers.append(nn.Linear(width, hidden))
            layers.append(ACTIVATIONS[spec.activation]())
            width = hidden
        self.trunk = nn.Sequential(*layers)
        self.mean_head = nn.Linear(width, spec.output_dim)
        if spec.stochastic:
            self.logvar_head = nn.Linear(width, spec.output_dim)
        self.reset_parameters()
        self.to(DTYPE)


    def reset_parameters(self):
        """Xavier-uniform weights, zero biases (uses the global torch rng)."""
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)


    def forward(self, x):
        hidden = self.trunk(x)
        if self.spec.stochastic:
            return self.mean_head(hidden), self.logvar_head(hidden)
        return self.mean_head(hidden)


def as_tensor(array):
    """Converts an array-like to a float64 tensor (no copy for tensors)."""
    if isinstance(array, torch.Tensor):
        return array.to(DTYPE)
    return torch.as_tensor(array, dtype=DTYPE)


def _check_input(encoder, x_batch):
    x_batch = as_tensor(x_batch)
    if x_batch.dim() != 2 or x_batch.shape[1] != encoder.spec.input_dim:
        raise DataError("Encoder expects input of width {:d}, got shape {}"
                        .format(encoder.spec.input_dim, tuple(x_batch.shape)))
    return x_batch


def encode_view(encoder, x_batch):
    """Deterministic view encoding f_i(X).

    Args:
        encoder: Deterministic Encoder.
        x_batch: (batch, input_dim) samples.

    Returns:
        (batch, output_dim) tensor.
    """
    return encoder(_check_input(encoder, x_batch))


def encode_stochastic(encoder, input_batch):
    """Gaussian posterior parameters of a stochastic encoder.

    Args:
        encoder: Stochastic Encoder.
        input_batch: (batch, input_dim) inputs.

    Returns:
        StochasticEncoding with std = exp(logvar / 2), logvar clamped.
    """
    mean, logvar = encoder(_check_input(encoder, input_batch))
    logvar = torch.clamp(logvar, encoder.spec.logvar_min,
                         encoder.spec.logvar_max)
    std = torch.exp(0.5 * logvar)
    if not (bool(torch.all(torch.isfinite(mean)))
            and bool(torch.all(torch.isfinite(std)))):
        raise NumericError("Stochastic encoder produced non-finite output")
    return StochasticEncoding(mean, std)


def sample(enc, noise_seed=None, eta=None):
    """Reparameterized sample z = mean + std * eta, eta ~ N(0, I).

    Gradients flow through mean and std, the noise is a constant.

    Args:
        enc: StochasticEncoding.
        noise_seed: Seed of the noise (used when eta is not given).
        eta: Explicit standard normal noise of the encoding's shape.

    Returns:
        Sample tensor of the encoding's shape.
    """
    if eta is None:
        generator = None if noise_seed is None else torch_generator(noise_seed)
        eta = torch.randn(enc.mean.shape, generator=generator, dtype=DTYPE)
    else:
        eta = as_tensor(eta)
        if eta.shape != enc.mean.shape:
            raise DataError("Noise shape {} differs from encoding shape {}"
                            .format(tuple(eta.shape), tuple(enc.mean.shape)))
    return enc.mean + enc.std * eta.detach()
