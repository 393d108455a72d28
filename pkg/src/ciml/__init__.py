"""Common and unique representation learning for multi-view classification."""
__version__ = "0.1"

from . import common
from . import output
from . import config
from . import dataset
from . import synthetic
from . import encoder
from . import info_estimators
from . import losses
from . import trainer
from . import evaluation
