"""Metrics, the multi-trial protocol and the analyses built on top of it."""
import itertools
from dataclasses import dataclass, field
import numpy as np
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import (accuracy_score, log_loss,
                             precision_recall_fscore_support)
from ciml.common import VARIANTS, ConfigError, DataError, seed_for
from ciml.config import parse_arguments, format_arguments
from ciml.dataset import MultiViewDataset, make_splits, save_dataset
from ciml.encoder import as_tensor
from ciml.info_estimators import MineNetwork, mine_estimate, train_mine
from ciml.trainer import (CimlModel, fit, infer_representation, predict,
                          mine_keys)
from ciml.output import printstatus

__all__ = [ "EvalSettings", "SweepSettings", "MetricsReport", "TrialResult",
            "AblationResult", "SweepCell", "SufficiencyReport", "AuditReport",
            "compute_metrics", "evaluate_state", "trial_seeds", "run_trial",
            "run_trials",
            "run_ablation", "sweep", "sufficiency_check",
            "independence_audit", "export_embeddings", "test_indices",
            "complexity_estimate", "convergence_summary", ]

METRIC_NAMES = ("acc", "precision", "f1", "precision_weighted",
                "f1_weighted")

GRIDS = {
    "beta12": { "beta1": [ 1e-6, 1e-5, 1e-4, 1e-3, 1e-2 ],
                "beta2": [ 1e-6, 1e-5, 1e-4, 1e-3, 1e-2 ] },
    "beta34": { "beta3": [ 1.0, 10.0, 100.0, 1000.0 ],
                "beta4": [ 1e-3, 1e-2, 1e-1, 1.0 ] },
    "dims": { "d_c": [ 4, 8, 16, 32 ],
              "d_u": [ 4, 8, 16, 32 ] },
}


class EvalSettings:
    """Settings of the trial protocol and of the post-hoc probes."""

    # (type, shape, optional, default)
    arguments = {
        "trials": ( "integer", None, True, 10 ),
        "train_fraction": ( "float", None, True, 0.8 ),
        "probe_c": ( "float", None, True, 1.0 ),
        "probe_max_iter": ( "integer", None, True, 2000 ),
        "audit_steps": ( "integer", None, True, 1000 ),
        "audit_lr": ( "float", None, True, 1e-3 ),
        "audit_batch_size": ( "integer", None, True, 256 ),
    }

    def __init__(self, **kwargs):
        values = { key: spec[3] for key, spec in self.arguments.items() }
        values.update(kwargs)
        for key, value in values.items():
            setattr(self, key, value)
        if self.trials < 1:
            raise ConfigError("Field 'trials' must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("Field 'train_fraction' must be in (0, 1)")
        for key in ("probe_max_iter", "audit_steps", "audit_batch_size"):
            if getattr(self, key) < 1:
                raise ConfigError("Field '{}' must be >= 1".format(key))


    @classmethod
    def fromdict(cls, configdict):
        return cls(**parse_arguments(cls.arguments, configdict, "evaluation"))


    def todict(self):
        return format_arguments(self.arguments, vars(self))


class SweepSettings:
    """Grid of a sensitivity sweep.

    The named grid fixes the swept fields and their default values. Any of
    the value lists may be replaced by giving the field explicitly.
    """

    # (type, shape, optional, default)
    arguments = {
        "grid": ( "string", None, True, "beta12" ),
        "beta1": ( "floatarray", None, True, None ),
        "beta2": ( "floatarray", None, True, None ),
        "beta3": ( "floatarray", None, True, None ),
        "beta4": ( "floatarray", None, True, None ),
        "d_c": ( "intarray", None, True, None ),
        "d_u": ( "intarray", None, True, None ),
    }

    def __init__(self, **kwargs):
        values = { key: spec[3] for key, spec in self.arguments.items() }
        values.update(kwargs)
        for key, value in values.items():
            setattr(self, key, value)
        if self.grid not in GRIDS:
            raise ConfigError("Unknown grid '{}', valid: {}".format(
                self.grid, ", ".join(sorted(GRIDS))))
        for key in self.arguments:
            if key == "grid" or getattr(self, key) is None:
                continue
            if key not in GRIDS[self.grid]:
                raise ConfigError("Field '{}' is not an axis of grid '{}'"
                                  .format(key, self.grid))
            if not getattr(self, key):
                raise ConfigError("Axis '{}' of the grid is empty".format(key))


    @classmethod
    def fromdict(cls, configdict):
        return cls(**parse_arguments(cls.arguments, configdict, "sweep"))


    def todict(self):
        return format_arguments(self.arguments, vars(self))


    def axes(self):
        """Returns the grid as dictionary field name -> list of values."""
        return { key: (list(values) if getattr(self, key) is None
                       else list(getattr(self, key)))
                 for key, values in GRIDS[self.grid].items() }


def compute_metrics(y_true, y_pred, m, average="macro"):
    """Accuracy, precision and F1 in percent.

    Precision and F1 are averaged over the classes occurring in y_true or
    y_pred. A class that is never predicted has precision 0.

    Args:
        y_true: True labels.
        y_pred: Predicted labels.
        m: Number of classes.
        average: "macro" (equal class weights) or "weighted" (support
            weighted).

    Returns:
        (acc, precision, f1) tuple.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError("Label vectors differ in shape ({} vs {})".format(
            y_true.shape, y_pred.shape))
    if not len(y_true):
        raise DataError("Metrics need at least one sample")
    for labels in (y_true, y_pred):
        if labels.min() < 0 or labels.max() >= m:
            raise DataError("Labels out of range [0, {:d})".format(m))
    present = np.union1d(y_true, y_pred)
    precision, _, f1, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=present, average=average, zero_division=0)
    return (100.0 * accuracy_score(y_true, y_pred), 100.0 * float(precision),
            100.0 * float(f1))


@dataclass
class MetricsReport:
    """Metrics of a series of trials.

    Attributes:
        per_trial: One dictionary per trial with the entries of METRIC_NAMES.
        trial_seeds: Seed of every trial.
    """

    per_trial: list
    trial_seeds: list

    def __post_init__(self):
        if not self.per_trial:
            raise DataError("A metrics report needs at least one trial")
        if len(self.per_trial) != len(self.trial_seeds):
            raise DataError("Number of trials and trial seeds differ")


    @property
    def trials(self):
        return len(self.per_trial)


    def values(self, name):
        return np.array([ trial[name] for trial in self.per_trial ])


    def mean(self, name):
        return float(np.mean(self.values(name)))


    def std(self, name):
        return float(np.std(self.values(name)))


    def as_dict(self):
        return {
            "trials": self.trials,
            "trial_seeds": list(self.trial_seeds),
            "per_trial": [ dict(trial) for trial in self.per_trial ],
            "summary": { name: { "mean": self.mean(name),
                                 "std": self.std(name) }
                         for name in METRIC_NAMES },
        }


    @classmethod
    def fromdict(cls, report):
        return cls([ dict(trial) for trial in report["per_trial"] ],
                   [ int(seed) for seed in report["trial_seeds"] ])


    def table_row(self):
        """Cells "mean +- std" of all metrics."""
        return [ "{:.2f} +- {:.2f}".format(self.mean(name), self.std(name))
                 for name in METRIC_NAMES ]


@dataclass
class TrialResult:
    """Outcome of one trial: trained state, history, split and metrics."""

    state: object
    history: object
    splits: object
    metrics: dict


@dataclass
class AblationResult:
    variant: str
    report: MetricsReport


@dataclass
class SweepCell:
    params: dict
    report: MetricsReport


def trial_seeds(seed, ntrial):
    """Seeds of the trials of a run with the given root seed."""
    return [ seed_for(seed, "trial", itrial) for itrial in range(ntrial) ]


def test_indices(state, dataset):
    """Indices of the samples a state was not trained on."""
    return np.setdiff1d(np.arange(dataset.n), state.train_index)


def evaluate_state(state, dataset, indices):
    """Metrics dictionary of a trained state on the given samples."""
    y_pred = predict(state, dataset.view_batch(indices))
    y_true = dataset.labels[indices]
    acc, precision, f1 = compute_metrics(y_true, y_pred, dataset.m)
    _, precision_w, f1_w = compute_metrics(y_true, y_pred, dataset.m,
                                           average="weighted")
    return { "acc": acc, "precision": precision, "f1": f1,
             "precision_weighted": precision_w, "f1_weighted": f1_w }


def run_trial(config, dataset, trial_seed, train_fraction, state=None,
              callback=None):
    """Trains and evaluates one trial.

    The trial seed replaces the root seed of the training configuration, the
    split is drawn from its "splits" substream.

    Args:
        config: TrainConfig.
        dataset: MultiViewDataset.
        trial_seed: Seed of the trial.
        train_fraction: Fraction of samples used for training.
        state: TrainState to continue or None.
        callback: Per-epoch callback passed to fit.

    Returns:
        TrialResult.
    """
    config = config.replace(seed=trial_seed)
    splits = make_splits(dataset, train_fraction,
                         seed_for(trial_seed, "splits"))
    state, history = fit(config, dataset, splits, state, callback)
    metrics = evaluate_state(state, dataset, splits.test)
    return TrialResult(state, history, splits, metrics)


def run_trials(config, dataset, ntrial, train_fraction=0.8, seeds=None):
    """Repeats training on fresh splits and aggregates the test metrics.

    Args:
        config: TrainConfig.
        dataset: MultiViewDataset.
        ntrial: Number of trials.
        train_fraction: Fraction of samples used for training.
        seeds: Explicit trial seeds (default: derived from config.seed).

    Returns:
        MetricsReport.
    """
    if ntrial < 1:
        raise ConfigError("Number of trials must be >= 1")
    if seeds is None:
        seeds = trial_seeds(config.seed, ntrial)
    elif len(seeds) != ntrial:
        raise ConfigError("Got {:d} trial seeds for {:d} trials".format(
            len(seeds), ntrial))
    per_trial = []
    for itrial, seed in enumerate(seeds):
        printstatus("Trial {:d}/{:d} (seed {:d})".format(itrial + 1, ntrial,
                                                        seed))
        result = run_trial(config, dataset, seed, train_fraction)
        printstatus("Test accuracy {:.2f}%".format(result.metrics["acc"]),
                    indentlevel=1)
        per_trial.append(result.metrics)
    return MetricsReport(per_trial, list(seeds))


def run_ablation(config, dataset, ntrial, train_fraction=0.8):
    """Full model against the variants without common or unique loss.

    All variants use the same trial seeds, hence identical splits.

    Returns:
        List of AblationResult in the order CIML, CIML-v1, CIML-v2.
    """
    seeds = trial_seeds(config.seed, ntrial)
    results = []
    for variant in VARIANTS:
        printstatus("Ablation variant {}".format(variant))
        report = run_trials(config.replace(variant=variant), dataset, ntrial,
                            train_fraction, seeds)
        results.append(AblationResult(variant, report))
    return results


def sweep(config, dataset, grid, ntrial, train_fraction=0.8):
    """Runs the trial protocol on every cell of a parameter grid.

    Args:
        config: TrainConfig (base values of all fields not swept).
        dataset: MultiViewDataset.
        grid: Dictionary field name -> list of values.
        ntrial: Number of trials per cell.
        train_fraction: Fraction of samples used for training.

    Returns:
        List of SweepCell in row-major grid order. All cells share the trial
        seeds.
    """
    if not grid or any(not values for values in grid.values()):
        raise ConfigError("Sweep grid must not be empty")
    names = list(grid)
    seeds = trial_seeds(config.seed, ntrial)
    cells = []
    for combination in itertools.product(*(grid[name] for name in names)):
        params = dict(zip(names, combination))
        printstatus("Sweep cell {}".format(", ".join(
            "{}={}".format(key, val) for key, val in params.items())))
        report = run_trials(config.replace(**params), dataset, ntrial,
                            train_fraction, seeds)
        cells.append(SweepCell(params, report))
    return cells


@dataclass
class SufficiencyReport:
    """Test cross-entropies of linear probes (conditional entropy proxies).

    Attributes:
        ce_representation: Proxy of H(Y|Z) (probe on the joint
            representation).
        ce_views: Proxy of H(Y|X) (probe on the concatenated views).
        gap: ce_representation - ce_views.
    """

    ce_representation: float
    ce_views: float
    gap: float
    n_train: int = 0
    n_test: int = 0

    def as_dict(self):
        return { "ce_representation": self.ce_representation,
                 "ce_views": self.ce_views, "gap": self.gap,
                 "n_train": self.n_train, "n_test": self.n_test }


def _probe_cross_entropy(x_train, y_train, x_test, y_test, m, settings):
    probe = LogisticRegression(C=settings.probe_c,
                               max_iter=settings.probe_max_iter)
    try:
        probe.fit(x_train, y_train)
    except ValueError as exc:
        raise DataError("Can't fit probe classifier: {}".format(exc))
    probs = np.zeros((len(y_test), m))
    probs[:, probe.classes_] = probe.predict_proba(x_test)
    return float(log_loss(y_test, probs, labels=np.arange(m)))


def sufficiency_check(state, dataset, settings=None, representation=None):
    """Compares probes on the representation and on the raw views.

    Both probes are trained on the training samples of the state and scored
    on the remaining samples.

    Args:
        state: Trained TrainState.
        dataset: MultiViewDataset the state was trained on.
        settings: EvalSettings (probe regularization and iterations).
        representation: Replacement (n, width) representation of all
            samples, e.g. noise for sanity checks (default: inferred).

    Returns:
        SufficiencyReport.
    """
    settings = EvalSettings() if settings is None else settings
    train, test = state.train_index, test_indices(state, dataset)
    if not len(test):
        raise DataError("Sufficiency check needs held-out samples")
    if representation is None:
        representation = infer_representation(
            state, dataset.view_batch()).joint
    representation = np.asarray(representation, dtype=float)
    if representation.shape[0] != dataset.n:
        raise DataError("Representation has {:d} rows, expected {:d}".format(
            representation.shape[0], dataset.n))
    views = state.standardizer.transform(dataset).concatenated()
    labels = dataset.labels
    ce_z = _probe_cross_entropy(representation[train], labels[train],
                                representation[test], labels[test], dataset.m,
                                settings)
    ce_x = _probe_cross_entropy(views[train], labels[train], views[test],
                                labels[test], dataset.m, settings)
    printstatus("Probe cross-entropies: representation {:.4f}, views {:.4f}"
                .format(ce_z, ce_x), indentlevel=1)
    return SufficiencyReport(ce_z, ce_x, ce_z - ce_x, len(train), len(test))


@dataclass
class AuditReport:
    """Post-hoc MINE estimates of the independence constraints (nats)."""

    unique_common: list = field(default_factory=list)
    unique_pairs: dict = field(default_factory=dict)

    def entries(self):
        """All estimates as list of (name, value)."""
        result = [ ("I(Zu{:d};Zc)".format(ii), val)
                   for ii, val in enumerate(self.unique_common) ]
        result += [ ("I(Zu{:d};Zu{:d})".format(ii, jj), val)
                    for (ii, jj), val in sorted(self.unique_pairs.items()) ]
        return result


    def max_value(self):
        values = [ val for _, val in self.entries() ]
        return max(values) if values else 0.0


    def as_dict(self):
        return { name: val for name, val in self.entries() }


def _audit_pair(a_data, b_data, mine_hidden, activation, settings, seed):
    nfit = a_data.shape[0] // 2
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = MineNetwork(a_data.shape[1], b_data.shape[1], mine_hidden,
                          activation, zero_init=True)
    train_mine(net, a_data[:nfit], b_data[:nfit], steps=settings.audit_steps,
               lr=settings.audit_lr, batch_size=settings.audit_batch_size,
               seed=seed)
    gen = torch.Generator()
    gen.manual_seed(seed)
    with torch.no_grad():
        estimate = mine_estimate(net, a_data[nfit:], b_data[nfit:],
                                 generator=gen)
    return float(estimate)


def independence_audit(state, dataset, settings=None):
    """Estimates I(Zu_i;Zc) and I(Zu_i;Zu_j) with freshly trained probes.

    The held-out samples are split in halves: the statistics networks are
    trained on the first and evaluated on the second half.

    Args:
        state: TrainState (trained or freshly initialized).
        dataset: MultiViewDataset the state was trained on.
        settings: EvalSettings (probe training parameters).

    Returns:
        AuditReport.
    """
    settings = EvalSettings() if settings is None else settings
    test = test_indices(state, dataset)
    if len(test) < 4:
        raise DataError("Independence audit needs at least four held-out "
                        "samples, got {:d}".format(len(test)))
    bundle = infer_representation(state, dataset.view_batch(test))
    z_c = as_tensor(bundle.common)
    z_u = [ as_tensor(zz) for zz in bundle.unique ]
    config = state.config
    report = AuditReport()
    for ikey, key in enumerate(mine_keys(len(z_u))):
        first, second = key.split("_")
        a_data = z_u[int(first[1:])]
        b_data = z_c if second == "c" else z_u[int(second[1:])]
        value = _audit_pair(a_data, b_data, config.mine_hidden,
                            config.activation, settings,
                            seed_for(config.seed, "probe", ikey))
        if second == "c":
            report.unique_common.append(value)
        else:
            report.unique_pairs[(int(first[1:]), int(second[1:]))] = value
        printstatus("{}: {:.4f} nats".format(key, value), indentlevel=1)
    return report


def export_embeddings(state, dataset, path, binary=False):
    """Writes the joint representation of all samples as single-view data set.

    Args:
        state: Trained TrainState.
        dataset: MultiViewDataset.
        path: Target directory.
        binary: Whether to use the binary matrix container.

    Returns:
        Name of the written manifest.
    """
    bundle = infer_representation(state, dataset.view_batch())
    embedding = MultiViewDataset([ bundle.joint.T ], dataset.labels, dataset.m,
                                 dataset.name + "-embedding")
    return save_dataset(embedding, path, binary)


def complexity_estimate(config, dataset, ntrain=None):
    """Operation count estimates and parameter counts of a training run.

    The consistent part scales as epochs * N * D_v * D_z, the unique part as
    epochs * N * V^2 * D_z^2, with D_v the total input width and D_z the
    width of the joint representation.

    Args:
        config: TrainConfig.
        dataset: MultiViewDataset.
        ntrain: Number of training samples (default: all samples).
    """
    ntrain = dataset.n if ntrain is None else ntrain
    d_v = sum(dataset.view_dims)
    nview = dataset.v
    d_z = config.d_c + nview * config.d_u
    consistent = config.epochs * ntrain * d_v * d_z
    unique = config.epochs * ntrain * nview**2 * d_z**2
    model = CimlModel(config, dataset.view_dims, dataset.m, ntrain)
    nparam = sum(par.numel() for name, par in model.named_parameters()
                 if name != "C")
    nmine = 0
    for key in mine_keys(nview):
        dim_b = config.d_c if key.endswith("_c") else config.d_u
        net = MineNetwork(config.d_u, dim_b, config.mine_hidden,
                          config.activation)
        nmine += sum(par.numel() for par in net.parameters())
    return {
        "samples": ntrain,
        "views": nview,
        "input_width": d_v,
        "representation_width": d_z,
        "epochs": config.epochs,
        "ops_consistent": consistent,
        "ops_unique": unique,
        "ops_total": consistent + unique,
        "parameters_network": nparam,
        "parameters_common_variable": ntrain * config.d_c,
        "parameters_statistics": nmine,
    }


def convergence_summary(history):
    """Loss at the first, middle and last epoch and the steady state ratio.

    The ratio |loss(mid) - loss(last)| / |loss(first) - loss(last)| is small
    once the loss curve has flattened in its second half.
    """
    totals = history.totals()
    if not totals:
        raise DataError("Empty training history")
    mid = max(len(totals) // 2, 1)
    first, middle, last = totals[0], totals[mid - 1], totals[-1]
    drop = first - last
    ratio = abs(middle - last) / abs(drop) if drop else None
    return { "epochs": len(totals), "mid_epoch": mid, "loss_first": first,
             "loss_mid": middle, "loss_last": last, "drop": drop,
             "steady_ratio": ratio, "decreased": middle < first }
