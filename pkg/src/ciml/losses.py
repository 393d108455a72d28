"""Composition of the estimator outputs into the training losses.

Inputs may be python floats or scalar tensors; the result has the same type,
so the functions serve both for back-propagation and for plain arithmetic.
"""
import math
from dataclasses import dataclass, field
import torch.nn.functional as F
from ciml.common import (DEFAULT_BETA, EPSILON, ConfigError, DataError,
                         NumericError)
from ciml.config import parse_arguments, format_arguments
from ciml.encoder import as_tensor
from ciml.info_estimators import check_labels

__all__ = [ "Hyperparams", "LossBreakdown", "common_loss", "unique_loss",
            "cross_entropy", "total_loss", ]


class Hyperparams:
    """Trade-off weights of the losses.

    Attributes:
        beta1: Compression weight of the common representation.
        beta2: Compression weight of the unique representations.
        beta3: Weight of the common loss in the total loss.
        beta4: Weight of the unique loss in the total loss.
    """

    # (type, shape, optional, default)
    arguments = {
        "beta1": ( "float", None, True, DEFAULT_BETA ),
        "beta2": ( "float", None, True, DEFAULT_BETA ),
        "beta3": ( "float", None, True, 1.0 ),
        "beta4": ( "float", None, True, 0.1 ),
    }

    def __init__(self, beta1=DEFAULT_BETA, beta2=DEFAULT_BETA, beta3=1.0,
                 beta4=0.1):
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.beta3 = float(beta3)
        self.beta4 = float(beta4)
        for name in self.arguments:
            if getattr(self, name) < 0.0:
                raise ConfigError("Hyperparameter '{}' must be >= 0".format(
                    name))


    @classmethod
    def fromdict(cls, configdict):
        return cls(**parse_arguments(cls.arguments, configdict, "model"))


    def todict(self):
        return format_arguments(self.arguments, vars(self))


@dataclass
class LossBreakdown:
    """All scalar terms of one loss evaluation.

    Attributes:
        ce: Cross-entropy of the classifier on the joint representation.
        l_common: Common representation loss.
        l_unique: Unique representation loss.
        total: ce + beta3 * l_common + beta4 * l_unique.
        terms: Every individual estimate by name.
    """

    ce: object
    l_common: object
    l_unique: object
    total: object
    terms: dict = field(default_factory=dict)

    def as_dict(self):
        """Flat dictionary of floats (for logs)."""
        result = { "ce": float(self.ce), "l_common": float(self.l_common),
                   "l_unique": float(self.l_unique),
                   "total": float(self.total) }
        result.update({ key: float(val) for key, val in self.terms.items() })
        return result


    def check_finite(self):
        """Raises NumericError naming the first non-finite entry."""
        for key, val in self.as_dict().items():
            if not math.isfinite(val):
                raise NumericError("Non-finite loss term '{}'".format(key))


def _check_finite(**values):
    for name, val in values.items():
        if not math.isfinite(float(val)):
            raise NumericError("Non-finite loss term '{}'".format(name))


def common_loss(h_c, alignment, i_zc_y, i_zc_c, beta1):
    """Common representation loss -H(C) + alignment - (I(Zc;Y) - b1 I(Zc;C)).

    Args:
        h_c: Entropy estimate of the common variable.
        alignment: Cross-view alignment penalty.
        i_zc_y: Lower bound of I(Zc;Y).
        i_zc_c: Upper bound of I(Zc;C) (nonnegative).
        beta1: Compression weight.
    """
    _check_finite(h_c=h_c, alignment=alignment, i_zc_y=i_zc_y, i_zc_c=i_zc_c)
    if float(i_zc_c) < -EPSILON:
        raise DataError("Upper bound I(Zc;C) must be nonnegative")
    return -h_c + alignment - (i_zc_y - beta1 * i_zc_c)


def unique_loss(per_view, pairwise, beta2):
    """Unique representation loss.

    -sum_i [I(Zu_i;Y) - b2 I(Zu_i;X_i) - I(Zu_i;Zc)] + sum_{i!=j} I(Zu_i;Zu_j)

    Args:
        per_view: List of (I(Zu_i;Y), I(Zu_i;X_i), I(Zu_i;Zc)) tuples.
        pairwise: v x v nested sequence (or tensor) of I(Zu_i;Zu_j) with
            zero diagonal.
        beta2: Compression weight.
    """
    nview = len(per_view)
    if len(pairwise) != nview or any(len(row) != nview for row in pairwise):
        raise DataError("Pairwise matrix must be {0:d} x {0:d}".format(nview))
    loss = 0.0
    for iview, (i_zu_y, i_zu_x, i_zu_zc) in enumerate(per_view):
        _check_finite(i_zu_y=i_zu_y, i_zu_x=i_zu_x, i_zu_zc=i_zu_zc)
        loss = loss - (i_zu_y - beta2 * i_zu_x - i_zu_zc)
    for iview in range(nview):
        if float(pairwise[iview][iview]) != 0.0:
            raise DataError("Pairwise matrix must have a zero diagonal")
        for jview in range(nview):
            if jview != iview:
                _check_finite(i_zu_zu=pairwise[iview][jview])
                loss = loss + pairwise[iview][jview]
    return loss


def cross_entropy(logits, labels):
    """Batch mean of -sum_j y_kj ln softmax(logits)_kj.

    Args:
        logits: (batch, m) classifier logits.
        labels: (batch,) integer labels.
    """
    logits = as_tensor(logits)
    labels = check_labels(logits, labels)
    return F.cross_entropy(logits, labels)


def total_loss(ce, l_common, l_unique, beta3, beta4, terms=None):
    """Total loss ce + beta3 * l_common + beta4 * l_unique.

    Returns:
        LossBreakdown.
    """
    _check_finite(ce=ce, l_common=l_common, l_unique=l_unique)
    total = ce + beta3 * l_common + beta4 * l_unique
    return LossBreakdown(ce, l_common, l_unique, total,
                         dict(terms) if terms else {})
