from dataclasses import dataclass, field
import numpy as np
import torch
from ciml.common import ConfigError, seed_for
from ciml.config import parse_arguments, format_arguments
from ciml.dataset import MultiViewDataset
from ciml.output import printstatus

__all__ = [ "SyntheticSpec", "OracleInfo", "generate_synthetic",
            "balance_priors", "calibrate_label_mix", "bayes_accuracies", ]

# Fixed point iteration balancing the class priors
BALANCE_MAXITER = 500
BALANCE_TOLERANCE = 1e-10

# Search of the label weights for target Bayes accuracies
CALIBRATION_GRID = 100
CALIBRATION_SWEEPS = 4
CALIBRATION_STEPS = 20
CALIBRATION_MAX_WEIGHT = 4.0


class SyntheticSpec:
    """Parameters of the linear-Gaussian multi-view generator.

    Every view is a fixed random linear map of the common latent and the
    view's own unique latent plus Gaussian noise. The label is drawn from a
    softmax over linear functions of the latents, each information source
    weighted by its entry in label_mix (common first, then one per view).
    """

    # (type, shape, optional, default)
    arguments = {
        "n": ( "integer", None, True, 2000 ),
        "v": ( "integer", None, True, 2 ),
        "m": ( "integer", None, True, 4 ),
        "dim_common": ( "integer", None, True, 2 ),
        "dim_unique": ( "integer", None, True, 2 ),
        "view_dim": ( "integer", None, True, None ),
        "noise_std": ( "float", None, True, 0.1 ),
        "label_mix": ( "floatarray", None, True, None ),
        "label_scale": ( "float", None, True, 3.0 ),
        "oracle_grid": ( "integer", None, True, 400 ),
        "target_common": ( "float", None, True, None ),
        "target_unique": ( "float", None, True, None ),
        "seed": ( "integer", None, True, 0 ),
        "name": ( "string", None, True, "synthetic" ),
    }

    def __init__(self, **kwargs):
        """Initializes and validates the generator parameters.

        Keyword args:
            n: Number of samples.
            v: Number of views.
            m: Number of classes.
            dim_common: Dimension of the common latent.
            dim_unique: Dimension of each unique latent.
            view_dim: Observed dimension of every view
                (default: 2 * (dim_common + dim_unique)).
            noise_std: Standard deviation of the observation noise.
            label_mix: v + 1 nonnegative weights (default: all ones).
            label_scale: Overall sharpness of the label logits.
            oracle_grid: Grid size S of the Bayes oracle (S*S samples).
            target_common: Common-only Bayes accuracy the label weights are
                calibrated to (together with target_unique).
            target_unique: Unique-only Bayes accuracy the label weights are
                calibrated to.
            seed: Seed of the generator.
            name: Name of the resulting data set.
        """
        values = { key: spec[3] for key, spec in self.arguments.items() }
        values.update(kwargs)
        for key, value in values.items():
            if key not in self.arguments:
                raise ConfigError("Unknown synthetic field '{}'".format(key))
            setattr(self, key, value)
        if self.view_dim is None:
            self.view_dim = 2 * (self.dim_common + self.dim_unique)
        if self.label_mix is None:
            self.label_mix = [ 1.0 ] * (self.v + 1)
        self.label_mix = [ float(ww) for ww in self.label_mix ]
        self._validate()


    def _validate(self):
        for key in ("n", "v", "m", "dim_common", "view_dim", "oracle_grid"):
            if getattr(self, key) < 1:
                raise ConfigError("Synthetic field '{}' must be >= 1".format(
                    key))
        if self.dim_unique < 0:
            raise ConfigError("Synthetic field 'dim_unique' must be >= 0")
        if self.n < self.m:
            raise ConfigError("Synthetic field 'n' must be >= m")
        if self.noise_std < 0.0:
            raise ConfigError("Synthetic field 'noise_std' must be >= 0")
        if len(self.label_mix) != self.v + 1:
            raise ConfigError("Synthetic field 'label_mix' needs v + 1 = {:d} "
                              "weights".format(self.v + 1))
        if min(self.label_mix) < 0.0:
            raise ConfigError("Synthetic field 'label_mix' must be "
                              "nonnegative")
        targets = (self.target_common, self.target_unique)
        if (targets[0] is None) != (targets[1] is None):
            raise ConfigError("Synthetic fields 'target_common' and "
                              "'target_unique' must be given together")
        if targets[0] is not None:
            if self.dim_unique == 0:
                raise ConfigError("Synthetic target accuracies need "
                                  "'dim_unique' >= 1")
            for key, target in zip(("target_common", "target_unique"),
                                   targets):
                if not 1.0 / self.m < target < 1.0:
                    raise ConfigError("Synthetic field '{}' must lie in "
                                      "(1/m, 1)".format(key))


    @classmethod
    def fromdict(cls, configdict):
        return cls(**parse_arguments(cls.arguments, configdict, "synthetic"))


    def todict(self):
        return format_arguments(self.arguments, vars(self))


@dataclass
class OracleInfo:
    """Ground truth of a generated data set."""

    latent_common: np.ndarray
    latent_unique: list
    mixing: list
    label_maps: list
    class_bias: np.ndarray = None
    label_mix: list = field(default_factory=list)
    acc_common: float = 0.0
    acc_unique: float = 0.0
    acc_joint: float = 0.0
    oracle_samples: int = 0
    class_counts: list = field(default_factory=list)

    def report(self):
        """Returns the scalar part of the oracle as dictionary."""
        return {
            "bayes_accuracy_common": self.acc_common,
            "bayes_accuracy_unique": self.acc_unique,
            "bayes_accuracy_joint": self.acc_joint,
            "label_mix": self.label_mix,
            "oracle_samples": self.oracle_samples,
            "class_counts": self.class_counts,
        }


def _label_logits(spec, label_maps, zc, zus):
    """Returns the label logits split into common and unique contributions."""
    common = (spec.label_scale * spec.label_mix[0] / np.sqrt(spec.dim_common)
              * np.dot(zc, label_maps[0].T))
    unique = np.zeros((zus[0].shape[0], spec.m))
    if spec.dim_unique:
        for iview, zu in enumerate(zus):
            unique += (spec.label_scale * spec.label_mix[iview + 1]
                       / np.sqrt(spec.dim_unique)
                       * np.dot(zu, label_maps[iview + 1].T))
    return common, unique


def _oracle_latents(spec):
    rng = np.random.default_rng(seed_for(spec.seed, "oracle"))
    grid = spec.oracle_grid
    zc = rng.standard_normal((grid, spec.dim_common))
    zus = [ rng.standard_normal((grid, spec.dim_unique))
            for _ in range(spec.v) ]
    return zc, zus


def _grid_probs(common, unique, bias):
    # probs[s, t, k]: p(y = k | common draw s, unique draw t)
    logits = torch.from_numpy(common[:, np.newaxis, :]
                              + unique[np.newaxis, :, :] + bias)
    return torch.softmax(logits, dim=-1)


def balance_priors(spec, label_maps, maxiter=BALANCE_MAXITER,
                   tolerance=BALANCE_TOLERANCE):
    """Per-class logit offsets making the label marginal uniform.

    The marginal is evaluated on the latent grid of the Bayes oracle.

    Args:
        spec: SyntheticSpec instance.
        label_maps: Label maps of the generator.
        maxiter: Maximal number of fixed point iterations.
        tolerance: Convergence threshold of max_k |ln(m p(y = k))|.

    Returns:
        (m,) array of offsets with zero mean.
    """
    common, unique = _label_logits(spec, label_maps, *_oracle_latents(spec))
    bias = np.zeros(spec.m)
    for _ in range(maxiter):
        marginal = _grid_probs(common, unique, bias).mean(dim=(0, 1)).numpy()
        step = np.log(spec.m * marginal)
        if np.max(np.abs(step)) < tolerance:
            break
        bias -= step
    return bias - bias.mean()


def _bisect(func, target, upper=CALIBRATION_MAX_WEIGHT,
            steps=CALIBRATION_STEPS):
    lower = 0.0
    for _ in range(steps):
        middle = 0.5 * (lower + upper)
        if func(middle) < target:
            lower = middle
        else:
            upper = middle
    return 0.5 * (lower + upper)


def calibrate_label_mix(spec, label_maps, grid=CALIBRATION_GRID,
                        sweeps=CALIBRATION_SWEEPS):
    """Label weights giving the target common-only and unique-only Bayes
    accuracies.

    The common weight and a common factor of the unique weights (keeping
    their ratios) are bisected alternately, each on its own target.

    Args:
        spec: SyntheticSpec with target_common and target_unique.
        label_maps: Label maps of the generator.
        grid: Oracle grid size used during the search.
        sweeps: Number of alternating bisection sweeps.

    Returns:
        List of v + 1 weights.
    """
    values = dict(vars(spec), oracle_grid=min(spec.oracle_grid, grid),
                  target_common=None, target_unique=None)
    trial = SyntheticSpec(**values)
    ratios = np.asarray(spec.label_mix[1:])
    if not ratios.any():
        ratios = np.ones(spec.v)

    def accuracies(common, unique):
        trial.label_mix = [ common ] + list(unique * ratios)
        return bayes_accuracies(trial, label_maps)

    common, unique = spec.label_mix[0], 1.0
    for _ in range(sweeps):
        common = _bisect(lambda ww: accuracies(ww, unique)[0],
                         spec.target_common)
        unique = _bisect(lambda ww: accuracies(common, ww)[1],
                         spec.target_unique)
    return [ common ] + [ float(unique * rr) for rr in ratios ]


def generate_synthetic(spec):
    """Generates a multi-view data set with known common/unique structure.

    Args:
        spec: SyntheticSpec instance.

    Returns:
        (MultiViewDataset, OracleInfo) tuple.
    """
    printstatus("Generating synthetic data set ({:d} samples, {:d} views, "
                "{:d} classes)".format(spec.n, spec.v, spec.m))
    rng = np.random.default_rng(seed_for(spec.seed, "synth"))
    dlat = spec.dim_common + spec.dim_unique
    mixing = [ rng.standard_normal((spec.view_dim, dlat)) / np.sqrt(dlat)
               for _ in range(spec.v) ]
    label_maps = [ rng.standard_normal((spec.m, spec.dim_common)) ]
    label_maps += [ rng.standard_normal((spec.m, spec.dim_unique))
                    for _ in range(spec.v) ]
    if spec.target_common is not None:
        values = dict(vars(spec), target_common=None, target_unique=None)
        values["label_mix"] = calibrate_label_mix(spec, label_maps)
        spec = SyntheticSpec(**values)
        printstatus("Calibrated label weights: {}".format(" ".join(
            "{:.4f}".format(ww) for ww in spec.label_mix)), indentlevel=1)
    bias = balance_priors(spec, label_maps)
    zc = rng.standard_normal((spec.n, spec.dim_common))
    zus = [ rng.standard_normal((spec.n, spec.dim_unique))
            for _ in range(spec.v) ]
    common, unique = _label_logits(spec, label_maps, zc, zus)
    gumbel = rng.gumbel(size=(spec.n, spec.m))
    labels = np.argmax(common + unique + bias + gumbel, axis=1)
    views = []
    for amat, zu in zip(mixing, zus):
        latent = np.hstack((zc, zu))
        noise = spec.noise_std * rng.standard_normal((spec.n, spec.view_dim))
        views.append((np.dot(latent, amat.T) + noise).T)
    dataset = MultiViewDataset(views, labels, spec.m, spec.name)

    oracle = OracleInfo(zc, zus, mixing, label_maps, bias,
                        list(spec.label_mix))
    oracle.acc_common, oracle.acc_unique, oracle.acc_joint = bayes_accuracies(
        spec, label_maps, bias)
    oracle.oracle_samples = spec.oracle_grid**2
    oracle.class_counts = np.bincount(labels, minlength=spec.m).tolist()
    printstatus("Bayes accuracies: common {:.4f}, unique {:.4f}, joint {:.4f}"
                .format(oracle.acc_common, oracle.acc_unique, oracle.acc_joint),
                indentlevel=1)
    return dataset, oracle


def bayes_accuracies(spec, label_maps, bias=None):
    """Monte-Carlo Bayes accuracies of the common-only, unique-only and joint
    predictors.

    The latent space is sampled on an S x S grid pairing S common draws with
    S draws of all unique latents, so all three accuracies are estimated on
    the same set of S*S joint samples.

    Args:
        spec: SyntheticSpec instance.
        label_maps: Label maps of the generator.
        bias: Per-class logit offsets (default: balance_priors).

    Returns:
        Tuple (acc_common, acc_unique, acc_joint).
    """
    if bias is None:
        bias = balance_priors(spec, label_maps)
    common, unique = _label_logits(spec, label_maps, *_oracle_latents(spec))
    probs = _grid_probs(common, unique, bias)
    acc_joint = probs.max(dim=-1).values.mean().item()
    acc_common = probs.mean(dim=1).max(dim=-1).values.mean().item()
    acc_unique = probs.mean(dim=0).max(dim=-1).values.mean().item()
    return acc_common, acc_unique, acc_joint
