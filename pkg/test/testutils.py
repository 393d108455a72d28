"""Helpers shared by the test modules."""
import os
import sys
import numpy as np

TESTDIR = os.path.dirname(os.path.abspath(__file__))
SRCDIR = os.path.join(TESTDIR, os.pardir, "src")
if SRCDIR not in sys.path:
    sys.path.insert(0, SRCDIR)

from ciml import output
from ciml.dataset import MultiViewDataset
from ciml.trainer import TrainConfig

output.set_verbosity(0)

# Directory of the configuration fixtures
FIXTURES = os.path.join(TESTDIR, "ciml")

# Long runs are only executed on request
ACCEPTANCE = os.environ.get("CIML_ACCEPTANCE") == "1"


def fixture(name):
    return os.path.join(FIXTURES, name)


def tiny_dataset(n=32, v=2, d=4, m=3, shift=3.0, seed=0):
    """Small data set with balanced labels, separable in the first feature of
    every view."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % m
    views = []
    for _ in range(v):
        view = rng.standard_normal((d, n))
        view[0] += shift * labels
        views.append(view)
    return MultiViewDataset(views, labels, m, "tiny")


def tiny_config(**kwargs):
    """Training configuration with small networks."""
    values = dict(d_c=2, d_u=2, hidden_dims=[ 8 ], common_hidden=[ 4 ],
                  mine_hidden=[ 8 ], epochs=2, batch_size=16)
    values.update(kwargs)
    return TrainConfig(**values)
