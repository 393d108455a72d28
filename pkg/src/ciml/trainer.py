"""Joint optimization of encoders, common variable, classifier and the
adversarial statistics networks."""
import copy
import pickle
import time
from dataclasses import dataclass, field
import numpy as np
import torch
import torch.nn as nn
from ciml.common import (DTYPE, LOGVAR_MIN, LOGVAR_MAX, VARIANTS,
                         CHECKPOINT_FORMAT, CHECKPOINT_VERSION, ConfigError,
                         DataError, seed_for, torch_generator)
from ciml.config import parse_arguments, format_arguments
from ciml.dataset import Standardizer
from ciml.encoder import (EncoderSpec, Encoder, encode_view, encode_stochastic,
                          sample, as_tensor)
from ciml.info_estimators import (MIEstimate, MineNetwork, gk_alignment,
                                  gaussian_entropy, batch_gaussian_entropy,
                                  kl_to_standard_normal,
                                  predictive_lower_bound, mine_estimate,
                                  mine_objective)
from ciml.losses import (Hyperparams, LossBreakdown, common_loss, unique_loss,
                         cross_entropy, total_loss)
from ciml.output import printstatus

__all__ = [ "TrainConfig", "TrainState", "TrainHistory", "CimlModel",
            "RepresentationBundle", "Noise", "init_state", "draw_noise",
            "compute_breakdown", "mine_step", "train_epoch", "fit",
            "infer_representation", "predict", "save_checkpoint",
            "load_checkpoint", ]

ENTROPY_ESTIMATORS = ("posterior", "batch")

# Fields fixed once the networks are built
ARCHITECTURE_FIELDS = ("d_c", "d_u", "hidden_dims", "common_hidden",
                       "mine_hidden", "activation", "logvar_min", "logvar_max")


class TrainConfig:
    """Model architecture, loss weights and optimization settings."""

    # (type, shape, optional, default)
    model_arguments = dict(Hyperparams.arguments, **{
        "d_c": ( "integer", None, True, 8 ),
        "d_u": ( "integer", None, True, 8 ),
        "hidden_dims": ( "intarray", None, True, [ 64, 64 ] ),
        "common_hidden": ( "intarray", None, True, [ 32 ] ),
        "mine_hidden": ( "intarray", None, True, [ 64, 64 ] ),
        "activation": ( "string", None, True, "elu" ),
        "logvar_min": ( "float", None, True, LOGVAR_MIN ),
        "logvar_max": ( "float", None, True, LOGVAR_MAX ),
        "entropy_estimator": ( "string", None, True, "posterior" ),
        "variant": ( "string", None, True, "CIML" ),
    })

    train_arguments = {
        "epochs": ( "integer", None, True, 100 ),
        "batch_size": ( "integer", None, True, 64 ),
        "lr": ( "float", None, True, 1e-3 ),
        "mine_lr": ( "float", None, True, 1e-3 ),
        "mine_steps": ( "integer", None, True, 1 ),
        "mc_samples": ( "integer", None, True, 1 ),
        "seed": ( "integer", None, True, 0 ),
        "patience": ( "integer", None, True, 0 ),
        "min_delta": ( "float", None, True, 0.0 ),
        "threads": ( "integer", None, True, 1 ),
        "checkpoint_every": ( "integer", None, True, 0 ),
    }

    def __init__(self, **kwargs):
        """Initializes the configuration, missing entries get defaults.

        Keyword args:
            All keys of model_arguments and train_arguments.
        """
        defaults = { key: spec[3] for key, spec in
                     list(self.model_arguments.items())
                     + list(self.train_arguments.items()) }
        for key in kwargs:
            if key not in defaults:
                raise ConfigError("Unknown training field '{}'".format(key))
        defaults.update(kwargs)
        for key, value in defaults.items():
            setattr(self, key, copy.copy(value))
        self.hyper = Hyperparams(self.beta1, self.beta2, self.beta3, self.beta4)
        self._validate()


    def _validate(self):
        if self.epochs < 1:
            raise ConfigError("Field 'epochs' must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("Field 'batch_size' must be >= 2")
        for key in ("d_c", "d_u", "mc_samples", "threads"):
            if getattr(self, key) < 1:
                raise ConfigError("Field '{}' must be >= 1".format(key))
        for key in ("mine_steps", "patience", "checkpoint_every"):
            if getattr(self, key) < 0:
                raise ConfigError("Field '{}' must be >= 0".format(key))
        if self.variant not in VARIANTS:
            raise ConfigError("Field 'variant' must be one of {}".format(
                ", ".join(VARIANTS)))
        if self.entropy_estimator not in ENTROPY_ESTIMATORS:
            raise ConfigError("Field 'entropy_estimator' must be one of {}"
                              .format(", ".join(ENTROPY_ESTIMATORS)))
        if self.logvar_min >= self.logvar_max:
            raise ConfigError("Field 'logvar_min' must be below 'logvar_max'")
        if any(hh < 1 for hh in self.hidden_dims + self.common_hidden
               + self.mine_hidden):
            raise ConfigError("Hidden layer widths must be positive")


    @classmethod
    def fromdict(cls, modeldict=None, traindict=None):
        """Creates the configuration from the [model] and [train] sections."""
        kwargs = parse_arguments(cls.model_arguments, modeldict, "model")
        kwargs.update(parse_arguments(cls.train_arguments, traindict, "train"))
        return cls(**kwargs)


    def todict(self):
        """Returns the ([model], [train]) sections as string dictionaries."""
        values = vars(self)
        return (format_arguments(self.model_arguments, values),
                format_arguments(self.train_arguments, values))


    def replace(self, **changes):
        """Returns a validated copy with some fields changed."""
        values = { key: getattr(self, key) for key in
                   list(self.model_arguments) + list(self.train_arguments) }
        values.update(changes)
        return TrainConfig(**values)


    @property
    def use_common_loss(self):
        return self.variant != "CIML-v1"


    @property
    def use_unique_loss(self):
        return self.variant != "CIML-v2"


    def effective_weights(self):
        """Weights (beta3, beta4) with the ablated loss term set to zero."""
        beta3 = self.beta3 if self.use_common_loss else 0.0
        beta4 = self.beta4 if self.use_unique_loss else 0.0
        return beta3, beta4


    def same_architecture(self, other):
        """Whether both configurations build networks of the same shape."""
        return all(getattr(self, key) == getattr(other, key)
                   for key in ARCHITECTURE_FIELDS)


def mine_keys(nview):
    """Names of the statistics networks: one per (unique, common) pair and one
    per unordered pair of unique representations."""
    keys = [ "u{:d}_c".format(ii) for ii in range(nview) ]
    keys += [ "u{:d}_u{:d}".format(ii, jj) for ii in range(nview)
              for jj in range(ii + 1, nview) ]
    return keys


class CimlModel(nn.Module):
    """All parameters updated by the total loss: common encoders f_i, unique
    encoders, common head, variational decoders, classifier and the common
    variable C (one row per training sample)."""

    def __init__(self, config, view_dims, m, n_train):
        super().__init__()
        self.config = config
        self.view_dims = list(view_dims)
        self.m = m
        act = config.activation
        clamp = dict(logvar_min=config.logvar_min, logvar_max=config.logvar_max)
        self.common_encoders = nn.ModuleList(
            Encoder(EncoderSpec(dd, config.hidden_dims, config.d_c, act))
            for dd in view_dims)
        self.unique_encoders = nn.ModuleList(
            Encoder(EncoderSpec(dd, config.hidden_dims, config.d_u, act,
                                stochastic=True, **clamp))
            for dd in view_dims)
        self.common_head = Encoder(EncoderSpec(
            config.d_c, config.common_hidden, config.d_c, act, stochastic=True,
            **clamp))
        self.common_decoder = nn.Linear(config.d_c, m)
        self.unique_decoders = nn.ModuleList(
            nn.Linear(config.d_u, m) for _ in view_dims)
        self.classifier = nn.Linear(config.d_c + len(view_dims) * config.d_u,
                                    m)
        self.C = nn.Parameter(torch.zeros(n_train, config.d_c, dtype=DTYPE))
        self.to(DTYPE)


    def forward(self, views, labels, rows, noise, mines, config=None):
        """Evaluates every loss term on one batch.

        The independence terms take their gradient with the moving averages
        of the statistics networks as partition functions.

        Args:
            views: List of (batch, d_i) standardized samples.
            labels: (batch,) labels.
            rows: (batch,) rows of C belonging to the samples.
            noise: Noise instance sized for mc_samples * batch.
            mines: MineCollection.
            config: TrainConfig with the loss settings (default: the one
                the model was built with).

        Returns:
            (LossBreakdown, dict with detached samples "z_c" and "z_u").
        """
        config = self.config if config is None else config
        nrep = config.mc_samples
        views = [ as_tensor(xx).repeat(nrep, 1) for xx in views ]
        labels = torch.as_tensor(labels, dtype=torch.int64).repeat(nrep)
        c_batch = self.C[torch.as_tensor(rows, dtype=torch.int64).repeat(nrep)]
        terms = {}

        encodings = [ encode_view(enc, xx)
                      for enc, xx in zip(self.common_encoders, views) ]
        terms["alignment"] = gk_alignment(encodings, c_batch)
        enc_c = encode_stochastic(self.common_head, c_batch)
        z_c = sample(enc_c, eta=noise.common)
        if config.entropy_estimator == "posterior":
            terms["H_C"] = gaussian_entropy(enc_c.std)
        else:
            terms["H_C"] = batch_gaussian_entropy(c_batch)
        terms["I_ZcY"] = MIEstimate(
            predictive_lower_bound(self.common_decoder(z_c), labels),
            "lower_bound_Y").value
        terms["I_ZcC"] = MIEstimate(kl_to_standard_normal(enc_c),
                                    "kl_upper_bound").value
        l_common = common_loss(terms["H_C"], terms["alignment"],
                               terms["I_ZcY"], terms["I_ZcC"], config.beta1)

        z_u = []
        per_view = []
        for iview, (enc, xx) in enumerate(zip(self.unique_encoders, views)):
            enc_u = encode_stochastic(enc, xx)
            zz = sample(enc_u, eta=noise.unique[iview])
            z_u.append(zz)
            i_y = MIEstimate(
                predictive_lower_bound(self.unique_decoders[iview](zz), labels),
                "lower_bound_Y").value
            i_x = MIEstimate(kl_to_standard_normal(enc_u),
                             "kl_upper_bound").value
            i_c = mine_estimate(mines.nets["u{:d}_c".format(iview)], zz, z_c,
                                perm=noise.perms["u{:d}_c".format(iview)],
                                ema_gradient=True).value
            terms["I_Zu{:d}Y".format(iview)] = i_y
            terms["I_Zu{:d}X".format(iview)] = i_x
            terms["I_Zu{:d}Zc".format(iview)] = i_c
            per_view.append((i_y, i_x, i_c))
        nview = len(views)
        pairwise = [ [ 0.0 ] * nview for _ in range(nview) ]
        for ii in range(nview):
            for jj in range(ii + 1, nview):
                key = "u{:d}_u{:d}".format(ii, jj)
                est = mine_estimate(mines.nets[key], z_u[ii], z_u[jj],
                                    perm=noise.perms[key],
                                    ema_gradient=True).value
                pairwise[ii][jj] = pairwise[jj][ii] = est
                terms["I_Zu{:d}Zu{:d}".format(ii, jj)] = est
        l_unique = unique_loss(per_view, pairwise, config.beta2)

        logits = self.classifier(torch.cat([ z_c ] + z_u, dim=1))
        ce = cross_entropy(logits, labels)
        beta3, beta4 = config.effective_weights()
        breakdown = total_loss(ce, l_common, l_unique, beta3, beta4, terms)
        cache = { "z_c": z_c.detach(), "z_u": [ zz.detach() for zz in z_u ] }
        return breakdown, cache


class MineCollection(nn.Module):
    """Statistics networks of all independence constraints."""

    def __init__(self, config, nview):
        super().__init__()
        nets = {}
        for key in mine_keys(nview):
            dim_b = config.d_c if key.endswith("_c") else config.d_u
            nets[key] = MineNetwork(config.d_u, dim_b, config.mine_hidden,
                                    config.activation)
        self.nets = nn.ModuleDict(nets)


@dataclass
class Noise:
    """Frozen randomness of one batch."""

    common: torch.Tensor
    unique: list
    perms: dict


class TrainState:
    """Everything a training run mutates.

    Attributes:
        config: TrainConfig.
        model: CimlModel (main parameters, incl. the common variable C).
        mines: MineCollection (adversarial parameters).
        optimizer: Adam optimizer of the main parameters.
        mine_optimizer: Adam optimizer of the statistics networks.
        standardizer: Standardizer fitted on the training samples.
        train_index: Data set indices of the training samples (row k of C
            belongs to sample train_index[k]).
        epoch: Number of completed epochs.
        history: TrainHistory of the completed epochs.
    """

    def __init__(self, config, view_dims, m, train_index, standardizer):
        self.config = config
        self.view_dims = list(view_dims)
        self.m = m
        self.train_index = np.asarray(train_index, dtype=np.int64)
        self.standardizer = standardizer
        with torch.random.fork_rng():
            torch.manual_seed(seed_for(config.seed, "init"))
            self.model = CimlModel(config, view_dims, m, len(train_index))
            self.mines = MineCollection(config, len(view_dims))
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.lr)
        self.mine_optimizer = torch.optim.Adam(self.mines.parameters(),
                                               lr=config.mine_lr)
        self.epoch = 0
        self.history = TrainHistory()


@dataclass
class TrainHistory:
    """Per-epoch records: loss breakdown, accuracies and wall time."""

    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)


    def append(self, epoch, breakdown, train_acc, test_acc, wall_time):
        record = { "epoch": epoch, "loss": breakdown.as_dict(),
                   "train_acc": train_acc, "test_acc": test_acc,
                   "wall_time": wall_time }
        self.records.append(record)
        return record


    def totals(self):
        return [ rec["loss"]["total"] for rec in self.records ]


@dataclass
class RepresentationBundle:
    """Joint representation (Z_c, Z_u^(1), ..., Z_u^(v)) of a batch."""

    common: np.ndarray
    unique: list

    @property
    def joint(self):
        return np.hstack([ self.common ] + list(self.unique))


    @property
    def width(self):
        return self.common.shape[1] + sum(zz.shape[1] for zz in self.unique)


def init_state(config, dataset, train_index=None):
    """Initializes all parameters of a run.

    Args:
        config: TrainConfig.
        dataset: MultiViewDataset (raw features).
        train_index: Indices of the training samples (default: all).

    Returns:
        TrainState with C set to the cross-view mean of the initial view
        encodings of the training samples.
    """
    if train_index is None:
        train_index = np.arange(dataset.n)
    if len(train_index) < 2:
        raise DataError("Training needs at least two samples")
    standardizer = Standardizer.fit(dataset, train_index)
    state = TrainState(config, dataset.view_dims, dataset.m, train_index,
                       standardizer)
    views = standardizer.transform_views(dataset.view_batch(train_index))
    with torch.no_grad():
        encodings = [ encode_view(enc, xx) for enc, xx in
                      zip(state.model.common_encoders, views) ]
        state.model.C.copy_(torch.stack(encodings).mean(dim=0))
    return state


def draw_noise(state, nrow, epoch, step, config=None):
    """Draws the noise of one batch from the (eta, mine) substreams.

    Args:
        state: TrainState.
        nrow: Number of rows (mc_samples * batch size).
        epoch: Epoch index.
        step: Batch index within the epoch.
        config: TrainConfig (default: the state's).
    """
    config = state.config if config is None else config
    gen = torch_generator(seed_for(config.seed, "eta", epoch, step))
    common = torch.randn((nrow, config.d_c), generator=gen, dtype=DTYPE)
    unique = [ torch.randn((nrow, config.d_u), generator=gen, dtype=DTYPE)
               for _ in state.view_dims ]
    gen = torch_generator(seed_for(config.seed, "mine", epoch, step))
    perms = { key: torch.randperm(nrow, generator=gen)
              for key in mine_keys(len(state.view_dims)) }
    return Noise(common, unique, perms)


def compute_breakdown(state, views, labels, rows, noise, config=None):
    """Forward pass of all branches on one batch (see CimlModel.forward)."""
    return state.model(views, labels, rows, noise, state.mines, config)


def _batches(config, epoch, ntrain):
    order = np.random.default_rng(
        seed_for(config.seed, "batching", epoch)).permutation(ntrain)
    bsize = config.batch_size
    batches = [ order[ii:ii + bsize] for ii in range(0, ntrain, bsize) ]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate(batches[-2:])
        batches.pop()
    return batches


def mine_step(state, cache, epoch, step, config=None):
    """Adversarial steps of the statistics networks on detached samples."""
    config = state.config if config is None else config
    nets = state.mines.nets
    for substep in range(config.mine_steps):
        gen = torch_generator(seed_for(config.seed, "mine", epoch, step,
                                       substep + 1))
        state.mine_optimizer.zero_grad()
        objective = 0.0
        for key, net in nets.items():
            iview = int(key.split("_")[0][1:])
            partner = key.split("_")[1]
            b_batch = (cache["z_c"] if partner == "c"
                       else cache["z_u"][int(partner[1:])])
            _, surrogate = mine_objective(net, cache["z_u"][iview], b_batch,
                                          generator=gen)
            objective = objective + surrogate
        (-objective).backward()
        state.mine_optimizer.step()


def train_epoch(state, dataset, config=None):
    """Runs one epoch of the joint optimization.

    For every batch one gradient step of the main parameters (and the rows of
    C in the batch) minimizes the total loss, followed by mine_steps steps of
    the statistics networks maximizing their bounds.

    Args:
        state: TrainState (modified in place).
        dataset: Standardized training samples, sample k belonging to row k
            of C.
        config: TrainConfig for loss weights, batching and seeds (default:
            the state's). Its architecture fields must match the state's.

    Returns:
        (state, epoch mean LossBreakdown) tuple.
    """
    config = state.config if config is None else config
    if not config.same_architecture(state.config):
        raise ConfigError("Training configuration describes other networks "
                          "than the state was built with")
    if dataset.n != state.model.C.shape[0]:
        raise DataError("Training set has {:d} samples, the common variable "
                        "{:d} rows".format(dataset.n, state.model.C.shape[0]))
    views = [ as_tensor(xx) for xx in dataset.view_batch() ]
    labels = torch.as_tensor(dataset.labels, dtype=torch.int64)
    epoch = state.epoch
    sums = None
    nsum = 0
    state.model.train()
    for step, rows in enumerate(_batches(config, epoch, dataset.n)):
        rows = torch.as_tensor(rows, dtype=torch.int64)
        noise = draw_noise(state, len(rows) * config.mc_samples, epoch, step,
                           config)
        state.optimizer.zero_grad()
        breakdown, cache = compute_breakdown(
            state, [ xx[rows] for xx in views ], labels[rows], rows, noise,
            config)
        breakdown.check_finite()
        breakdown.total.backward()
        state.optimizer.step()
        if config.use_unique_loss and config.mine_steps:
            mine_step(state, cache, epoch, step, config)

        values = breakdown.as_dict()
        if sums is None:
            sums = dict.fromkeys(values, 0.0)
        for key, val in values.items():
            sums[key] += len(rows) * val
        nsum += len(rows)
    means = { key: val / nsum for key, val in sums.items() }
    mean_breakdown = LossBreakdown(
        means.pop("ce"), means.pop("l_common"), means.pop("l_unique"),
        means.pop("total"), means)
    state.epoch += 1
    return state, mean_breakdown


def fit(config, dataset, splits, state=None, callback=None):
    """Trains for config.epochs epochs (or until early stopping).

    Args:
        config: TrainConfig.
        dataset: MultiViewDataset with raw features.
        splits: SplitIndices.
        state: TrainState to continue (e.g. from a checkpoint) or None.
        callback: Called as callback(state, record) after every epoch.

    Returns:
        (TrainState, TrainHistory) tuple.
    """
    if state is None:
        state = init_state(config, dataset, splits.train)
    elif not np.array_equal(state.train_index, splits.train):
        raise DataError("Checkpoint was trained on a different split")
    else:
        state.config = state.model.config = config
    train_data = state.standardizer.transform(dataset.subset(splits.train))
    test_views = dataset.view_batch(splits.test)
    test_labels = dataset.labels[splits.test]
    history = state.history
    best, waiting = np.inf, 0
    for rec in history.records:
        if rec["loss"]["total"] < best - config.min_delta:
            best, waiting = rec["loss"]["total"], 0
        else:
            waiting += 1
    while state.epoch < config.epochs:
        if config.patience and waiting >= config.patience:
            printstatus("Early stop after {:d} epochs without improvement"
                        .format(waiting), indentlevel=1)
            break
        start = time.perf_counter()
        state, breakdown = train_epoch(state, train_data, config)
        train_pred = predict(state, train_data.view_batch(), standardize=False)
        train_acc = float(np.mean(train_pred == train_data.labels))
        test_acc = float(np.mean(predict(state, test_views) == test_labels))
        record = history.append(state.epoch, breakdown, train_acc, test_acc,
                                time.perf_counter() - start)
        printstatus("Epoch {:4d}: loss {:12.6f}  ce {:9.6f}  train acc {:.4f}"
                    "  test acc {:.4f}".format(state.epoch, breakdown.total,
                                               breakdown.ce, train_acc,
                                               test_acc), indentlevel=1)
        if breakdown.total < best - config.min_delta:
            best, waiting = breakdown.total, 0
        else:
            waiting += 1
        if callback is not None:
            callback(state, record)
    return state, history


def infer_representation(state, views, standardize=True):
    """Inference-time joint representation (posterior means, no sampling).

    The common variable of unseen samples is the cross-view mean of the view
    encodings, the minimizer of the alignment penalty.

    Args:
        state: TrainState.
        views: List of (batch, d_i) samples.
        standardize: Whether views still need standardization.

    Returns:
        RepresentationBundle.
    """
    if len(views) != len(state.view_dims):
        raise DataError("Expected {:d} views, got {:d}".format(
            len(state.view_dims), len(views)))
    if standardize:
        views = state.standardizer.transform_views(views)
    model = state.model
    model.eval()
    with torch.no_grad():
        views = [ as_tensor(xx) for xx in views ]
        encodings = [ encode_view(enc, xx)
                      for enc, xx in zip(model.common_encoders, views) ]
        c_mean = torch.stack(encodings).mean(dim=0)
        z_c = encode_stochastic(model.common_head, c_mean).mean
        z_u = [ encode_stochastic(enc, xx).mean
                for enc, xx in zip(model.unique_encoders, views) ]
    return RepresentationBundle(z_c.numpy(), [ zz.numpy() for zz in z_u ])


def predict(state, views, standardize=True):
    """Predicted labels of the classifier on the joint representation."""
    bundle = infer_representation(state, views, standardize)
    with torch.no_grad():
        logits = state.model.classifier(as_tensor(bundle.joint))
    return logits.argmax(dim=1).numpy()


def save_checkpoint(state, filename):
    """Writes all parameters, optimizer states, configuration and history.

    Args:
        state: TrainState.
        filename: Name of the checkpoint file.
    """
    modeldict, traindict = state.config.todict()
    content = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": modeldict,
        "train_config": traindict,
        "view_dims": state.view_dims,
        "m": state.m,
        "epoch": state.epoch,
        "train_index": torch.as_tensor(state.train_index),
        "means": [ torch.as_tensor(mm) for mm in state.standardizer.means ],
        "scales": [ torch.as_tensor(ss) for ss in state.standardizer.scales ],
        "model": state.model.state_dict(),
        "mines": state.mines.state_dict(),
        "optimizer": state.optimizer.state_dict(),
        "mine_optimizer": state.mine_optimizer.state_dict(),
        "history": state.history.records,
    }
    torch.save(content, filename)


def load_checkpoint(filename, config=None):
    """Restores a TrainState written by save_checkpoint.

    Args:
        filename: Name of the checkpoint file.
        config: TrainConfig replacing the stored one (e.g. with a larger epoch
            budget); architecture fields must agree.
    """
    try:
        content = torch.load(filename, weights_only=True)
    except (OSError, RuntimeError, EOFError, ValueError,
            pickle.UnpicklingError) as exc:
        raise DataError("Can't read checkpoint '{}': {}".format(filename, exc))
    if (not isinstance(content, dict)
            or content.get("format") != CHECKPOINT_FORMAT
            or content.get("version") != CHECKPOINT_VERSION):
        raise DataError("'{}' is not a version {:d} checkpoint".format(
            filename, CHECKPOINT_VERSION))
    stored = TrainConfig.fromdict(content["model_config"],
                                  content["train_config"])
    if config is None:
        config = stored
    elif config.todict()[0] != stored.todict()[0]:
        raise ConfigError("Model configuration differs from the checkpoint")
    standardizer = Standardizer([ mm.numpy() for mm in content["means"] ],
                                [ ss.numpy() for ss in content["scales"] ])
    state = TrainState(config, content["view_dims"], content["m"],
                       content["train_index"].numpy(), standardizer)
    state.model.load_state_dict(content["model"])
    state.mines.load_state_dict(content["mines"])
    state.optimizer.load_state_dict(content["optimizer"])
    state.mine_optimizer.load_state_dict(content["mine_optimizer"])
    state.epoch = content["epoch"]
    state.history = TrainHistory(list(content["history"]))
    return state
