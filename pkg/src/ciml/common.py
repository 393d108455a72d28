import zlib
import numpy as np
import torch

# Floating point type of every tensor the package creates
DTYPE = torch.float64

# Log-variance of all stochastic heads is clamped into this interval before
# exponentiation
LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0

# Decay of the moving average of the MINE partition function
MINE_EMA_DECAY = 0.99

# Default weights of the compression terms
DEFAULT_BETA = 1e-4

# General numerical tolerance (for comparing real numbers)
EPSILON = 1e-12

# Magic bytes of the binary matrix container
MATRIX_MAGIC = b"CIMLMAT1"

# Format tag and version of checkpoint files
CHECKPOINT_FORMAT = "ciml-checkpoint"
CHECKPOINT_VERSION = 1

# Exit codes of the command line tool
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

VARIANTS = ("CIML", "CIML-v1", "CIML-v2")


class CimlError(Exception):
    """Base class of all errors the package raises on purpose."""

    exitcode = 1


class ConfigError(CimlError):
    """Invalid or inconsistent configuration."""

    exitcode = EXIT_CONFIG


class DataError(CimlError, ValueError):
    """Invalid data files, shapes or label values."""

    exitcode = EXIT_DATA


class NumericError(CimlError, ArithmeticError):
    """Non-finite values showing up during optimization."""

    exitcode = EXIT_NUMERIC


def seed_for(root, name, *keys):
    """Derives the seed of a named random substream.

    Args:
        root: Root seed of the run.
        name: Name of the substream ("init", "batching", "eta", ...).
        keys: Further integers (epoch, step, trial) selecting a sub-substream.

    Returns:
        Non-negative integer seed.
    """
    entropy = [ int(root), zlib.crc32(name.encode("ascii")) ]
    entropy += [ int(kk) for kk in keys ]
    seq = np.random.SeedSequence(entropy)
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def torch_generator(seed):
    """Returns a CPU torch generator seeded with the given seed."""
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen
