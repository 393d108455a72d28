"""Mutual information and entropy estimators.

All quantities are in nats. Every estimator is a batch mean so that the
weights of the losses do not depend on the batch size.
"""
import math
from dataclasses import dataclass
import torch
import torch.nn as nn
import torch.nn.functional as F
from ciml.common import (DTYPE, MINE_EMA_DECAY, DataError, NumericError,
                         torch_generator)
from ciml.encoder import ACTIVATIONS, StochasticEncoding, as_tensor

__all__ = [ "MIEstimate", "MineNetwork", "gk_alignment", "gaussian_entropy",
            "batch_gaussian_entropy", "kl_to_standard_normal",
            "predictive_lower_bound", "check_labels", "mine_estimate",
            "mine_objective", "train_mine", ]

MI_KINDS = ("lower_bound_Y", "kl_upper_bound", "mine")

LOG_2PIE = math.log(2.0 * math.pi * math.e)

# Round-off allowed in the sign invariants of the variational bounds
BOUND_TOLERANCE = 1e-9


@dataclass
class MIEstimate:
    """Value of a mutual information estimate and the bound it comes from."""

    value: torch.Tensor
    kind: str

    def __post_init__(self):
        if self.kind not in MI_KINDS:
            raise ValueError("Unknown estimate kind '{}'".format(self.kind))
        value = float(self.value)
        if self.kind == "kl_upper_bound" and value < -BOUND_TOLERANCE:
            raise NumericError("Negative KL upper bound {:g}".format(value))
        if self.kind == "lower_bound_Y" and value > BOUND_TOLERANCE:
            raise NumericError("Positive predictive lower bound {:g}".format(
                value))
        if self.kind == "mine" and not math.isfinite(value):
            raise NumericError("Non-finite MINE estimate")

    def __float__(self):
        return float(self.value)


class MineNetwork(nn.Module):
    """Statistics network T(a, b) of the Donsker-Varadhan bound, together with
    the moving average of its partition function."""

    def __init__(self, dim_a, dim_b, hidden_dims=(64, 64), activation="elu",
                 zero_init=False, ema_decay=MINE_EMA_DECAY):
        """Initializes the network.

        Args:
            dim_a: Width of the first argument.
            dim_b: Width of the second argument.
            hidden_dims: Widths of the hidden layers.
            activation: Activation name (see encoder.ACTIVATIONS).
            zero_init: Whether the output layer starts at zero (T = 0).
            ema_decay: Decay of the partition function moving average.
        """
        super().__init__()
        self.dim_a = dim_a
        self.dim_b = dim_b
        self.ema_decay = ema_decay
        layers = []
        width = dim_a + dim_b
        for hidden in hidden_dims:
            layers.append(nn.Linear(width, hidden))
            layers.append(ACTIVATIONS[activation]())
            width = hidden
        layers.append(nn.Linear(width, 1))
        self.net = nn.Sequential(*layers)
        for module in self.net:
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)
        if zero_init:
            nn.init.zeros_(self.net[-1].weight)
        self.register_buffer("ema", torch.zeros((), dtype=DTYPE))
        self.register_buffer("ema_steps", torch.zeros((), dtype=torch.int64))
        self.to(DTYPE)


    def forward(self, a, b):
        return self.net(torch.cat((a, b), dim=1)).squeeze(1)


    def corrected_ema(self):
        """Bias corrected moving average of the partition function."""
        steps = int(self.ema_steps)
        if steps == 0:
            return None
        return self.ema / (1.0 - self.ema_decay**steps)


def _same_shape(matrices, reference, what):
    for imat, mat in enumerate(matrices):
        if mat.shape != reference.shape:
            raise DataError("{} {:d} has shape {}, expected {}".format(
                what, imat, tuple(mat.shape), tuple(reference.shape)))


def gk_alignment(view_encodings, c_batch):
    """Cross-view alignment penalty sum_i mean_k |f_i(x_k) - c_k|^2.

    Args:
        view_encodings: List of (batch, d_c) view encodings.
        c_batch: (batch, d_c) rows of the common variable.

    Returns:
        Nonnegative scalar tensor.
    """
    c_batch = as_tensor(c_batch)
    encodings = [ as_tensor(ff) for ff in view_encodings ]
    _same_shape(encodings, c_batch, "View encoding")
    if c_batch.shape[0] == 0:
        return torch.zeros((), dtype=DTYPE)
    total = torch.zeros((), dtype=DTYPE)
    for ff in encodings:
        total = total + torch.sum((ff - c_batch)**2, dim=1).mean()
    return total


def gaussian_entropy(std_batch):
    """Differential entropy of diagonal Gaussians, averaged over the batch.

    Args:
        std_batch: (batch, d) standard deviations.

    Returns:
        mean_k 0.5 * sum_j ln(2 pi e sigma_kj^2).
    """
    std_batch = as_tensor(std_batch)
    if std_batch.dim() == 1:
        std_batch = std_batch.unsqueeze(0)
    if std_batch.shape[0] == 0:
        return torch.zeros((), dtype=DTYPE)
    if not bool(torch.all(std_batch > 0.0)):
        raise DataError("Standard deviations must be positive")
    per_sample = torch.sum(0.5 * LOG_2PIE + torch.log(std_batch), dim=1)
    return per_sample.mean()


def batch_gaussian_entropy(c_batch):
    """Entropy of a diagonal Gaussian fitted to the rows of a batch.

    Args:
        c_batch: (batch, d) samples, batch >= 2.

    Returns:
        gaussian_entropy of the per-dimension batch standard deviations.
    """
    c_batch = as_tensor(c_batch)
    if c_batch.shape[0] < 2:
        raise DataError("Batch entropy needs at least two samples")
    std = torch.sqrt(torch.var(c_batch, dim=0, unbiased=False) + 1e-12)
    return gaussian_entropy(std.unsqueeze(0))


def kl_to_standard_normal(enc):
    """KL divergence of a diagonal Gaussian posterior from N(0, I), averaged
    over the batch (variational upper bound of the mutual information between
    representation and encoder input).

    Args:
        enc: StochasticEncoding.

    Returns:
        mean_k 0.5 * sum_j (sigma^2 + mu^2 - 1 - ln sigma^2).
    """
    if not isinstance(enc, StochasticEncoding):
        raise DataError("KL needs a StochasticEncoding")
    var = enc.std**2
    per_sample = 0.5 * torch.sum(var + enc.mean**2 - 1.0 - torch.log(var),
                                 dim=1)
    if per_sample.numel() == 0:
        return torch.zeros((), dtype=DTYPE)
    return per_sample.mean()


def check_labels(logits, labels):
    """Validates integer labels against (batch, m) logits."""
    labels = torch.as_tensor(labels, dtype=torch.int64)
    if labels.dim() != 1 or labels.shape[0] != logits.shape[0]:
        raise DataError("Got {:d} labels for {:d} predictions".format(
            labels.numel(), logits.shape[0]))
    if labels.numel() and (int(labels.min()) < 0
                           or int(labels.max()) >= logits.shape[1]):
        raise DataError("Labels out of range [0, {:d})".format(
            logits.shape[1]))
    return labels


def predictive_lower_bound(logits_from_z, labels):
    """Single sample Monte-Carlo estimate of E[log q(y|z)], the variational
    lower bound of I(Z;Y) up to the constant H(Y).

    Args:
        logits_from_z: (batch, m) logits of the variational decoder q.
        labels: (batch,) integer labels.

    Returns:
        Nonpositive scalar tensor.
    """
    logits_from_z = as_tensor(logits_from_z)
    labels = check_labels(logits_from_z, labels)
    return -F.cross_entropy(logits_from_z, labels)


def _check_pair(a_batch, b_batch):
    a_batch, b_batch = as_tensor(a_batch), as_tensor(b_batch)
    if a_batch.shape[0] != b_batch.shape[0]:
        raise DataError("MINE batches differ in size ({:d} vs {:d})".format(
            a_batch.shape[0], b_batch.shape[0]))
    if a_batch.shape[0] < 2:
        raise DataError("MINE needs a batch of at least two samples")
    return a_batch, b_batch


def _statistics(net, a_batch, b_batch, perm, generator):
    a_batch, b_batch = _check_pair(a_batch, b_batch)
    nsample = a_batch.shape[0]
    if perm is None:
        perm = torch.randperm(nsample, generator=generator)
    t_joint = net(a_batch, b_batch)
    t_marg = net(a_batch, b_batch[perm])
    return t_joint, t_marg


def _dv_bound(t_joint, t_marg):
    log_mean_exp = torch.logsumexp(t_marg, dim=0) - math.log(t_marg.numel())
    return t_joint.mean() - log_mean_exp


def _ema_surrogate(t_joint, t_marg, estimate, denominator):
    """Value of estimate, gradient with the partition function replaced by
    denominator."""
    surrogate = t_joint.mean() - torch.exp(t_marg).mean() / denominator
    return surrogate + (estimate - surrogate).detach()


def mine_estimate(net, a_batch, b_batch, perm=None, generator=None,
                  ema_gradient=False):
    """Donsker-Varadhan estimate mean_joint T - ln mean_marginal exp(T).

    The marginal samples pair a with an in-batch permutation of b.

    Args:
        net: MineNetwork.
        a_batch: (batch, dim_a) samples.
        b_batch: (batch, dim_b) samples.
        perm: Explicit permutation of the batch (default: random).
        generator: torch.Generator drawing the permutation.
        ema_gradient: Whether the gradient uses the bias corrected moving
            average of the network as partition function (loss terms). The
            moving average is not advanced; before its first update the plain
            gradient is used.

    Returns:
        MIEstimate of kind "mine".
    """
    t_joint, t_marg = _statistics(net, a_batch, b_batch, perm, generator)
    estimate = _dv_bound(t_joint, t_marg)
    denominator = net.corrected_ema() if ema_gradient else None
    if denominator is not None:
        estimate = _ema_surrogate(t_joint, t_marg, estimate,
                                  denominator.detach())
    return MIEstimate(estimate, "mine")


def mine_objective(net, a_batch, b_batch, perm=None, generator=None):
    """Training objective of the statistics network.

    The returned surrogate has the value of the Donsker-Varadhan estimate,
    while its gradient replaces the partition function in the denominator by
    the bias corrected moving average. Advances the moving average.

    Returns:
        (MIEstimate, surrogate) tuple; the surrogate is to be maximized.
    """
    t_joint, t_marg = _statistics(net, a_batch, b_batch, perm, generator)
    estimate = _dv_bound(t_joint, t_marg)
    with torch.no_grad():
        net.ema.mul_(net.ema_decay).add_((1.0 - net.ema_decay)
                                         * torch.exp(t_marg).mean())
        net.ema_steps.add_(1)
        denominator = net.corrected_ema()
    surrogate = _ema_surrogate(t_joint, t_marg, estimate, denominator)
    return MIEstimate(estimate, "mine"), surrogate


def train_mine(net, a_data, b_data, steps=1000, lr=1e-3, batch_size=256,
               seed=0):
    """Trains a statistics network on fixed samples and returns its estimate.

    Args:
        net: MineNetwork (trained in place).
        a_data: (n, dim_a) samples.
        b_data: (n, dim_b) samples paired with a_data.
        steps: Number of Adam steps.
        lr: Learning rate.
        batch_size: Minibatch size (capped at n).
        seed: Seed of minibatch selection and permutations.

    Returns:
        Final Donsker-Varadhan estimate on all samples (float).
    """
    a_data, b_data = _check_pair(a_data, b_data)
    a_data, b_data = a_data.detach(), b_data.detach()
    nsample = a_data.shape[0]
    batch_size = min(batch_size, nsample)
    generator = torch_generator(seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=lr)
    for _ in range(steps):
        idx = torch.randperm(nsample, generator=generator)[:batch_size]
        optimizer.zero_grad()
        _, surrogate = mine_objective(net, a_data[idx], b_data[idx],
                                      generator=generator)
        (-surrogate).backward()
        optimizer.step()
    with torch.no_grad():
        estimate = mine_estimate(net, a_data, b_data, generator=generator)
    return float(estimate)
