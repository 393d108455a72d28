import os
import configparser
from dataclasses import dataclass
import numpy as np
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler
from ciml.common import DataError, ConfigError, MATRIX_MAGIC
from ciml.config import parse_arguments
from ciml.output import printstatus

__all__ = [ "MultiViewDataset", "SplitIndices", "Standardizer",
            "load_dataset", "save_dataset", "read_matrix", "write_matrix",
            "make_splits", ]


class MultiViewDataset:
    """Multi-view data set: several feature matrices describing the same
    samples plus an integer label for every sample.

    Attributes:
        views: List of (d_i, n) arrays (features x samples).
        labels: Integer array of length n with values in [0, m).
        m: Number of classes.
        name: Name of the data set.
    """

    def __init__(self, views, labels, m, name="dataset"):
        """Initializes and validates the data set.

        Args:
            views: Sequence of (d_i, n) arrays.
            labels: Sequence of n integer labels.
            m: Number of classes.
            name: Name of the data set.
        """
        if not len(views):
            raise DataError("Data set must contain at least one view")
        self.views = [ np.array(view, dtype=float, ndmin=2) for view in views ]
        labels = np.asarray(labels)
        if labels.ndim != 1:
            raise DataError("Labels must be a vector")
        if labels.size and not np.all(np.equal(np.mod(labels, 1), 0)):
            raise DataError("Labels must be integers")
        self.labels = labels.astype(np.int64)
        self.m = int(m)
        self.name = name
        n = self.labels.shape[0]
        for iview, view in enumerate(self.views):
            if view.shape[1] != n:
                raise DataError(
                    "View {:d} has {:d} samples, but {:d} labels were given"
                    .format(iview, view.shape[1], n))
            if not np.all(np.isfinite(view)):
                raise DataError("View {:d} contains non-finite entries"
                                .format(iview))
        if self.m < 1:
            raise DataError("Number of classes must be positive")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.m):
            raise DataError("Labels out of range [0, {:d})".format(self.m))


    @property
    def n(self):
        return self.labels.shape[0]


    @property
    def v(self):
        return len(self.views)


    @property
    def view_dims(self):
        return [ view.shape[0] for view in self.views ]


    def view_batch(self, indices=None):
        """Returns the samples of all views in encoder layout.

        Args:
            indices: Sample indices (default: all samples).

        Returns:
            List of (batch, d_i) arrays.
        """
        if indices is None:
            return [ view.T.copy() for view in self.views ]
        return [ view[:, indices].T.copy() for view in self.views ]


    def concatenated(self, indices=None):
        """Returns all views stacked side by side as (batch, sum d_i)."""
        return np.hstack(self.view_batch(indices))


    def subset(self, indices):
        """Returns a new data set containing the given samples only."""
        indices = np.asarray(indices, dtype=np.int64)
        return MultiViewDataset([ view[:, indices] for view in self.views ],
                                self.labels[indices], self.m, self.name)


@dataclass
class SplitIndices:
    """Disjoint train/test partition of the sample indices."""

    train: np.ndarray
    test: np.ndarray
    trial_seed: int


class Standardizer:
    """Per-view standardization (zero mean, unit variance per dimension) with
    statistics taken from the training samples."""

    def __init__(self, means, scales):
        self.means = [ np.asarray(mm, dtype=float) for mm in means ]
        self.scales = [ np.asarray(ss, dtype=float) for ss in scales ]


    @classmethod
    def fit(cls, dataset, indices=None):
        """Fits the statistics on the given samples of a data set."""
        means, scales = [], []
        for samples in dataset.view_batch(indices):
            scaler = StandardScaler().fit(samples)
            means.append(scaler.mean_)
            scales.append(scaler.scale_)
        return cls(means, scales)


    def transform_views(self, views):
        """Standardizes a list of (batch, d_i) arrays."""
        if len(views) != len(self.means):
            raise DataError("Expected {:d} views, got {:d}".format(
                len(self.means), len(views)))
        return [ (np.asarray(xx, dtype=float) - mean) / scale
                 for xx, mean, scale in zip(views, self.means, self.scales) ]


    def transform(self, dataset):
        """Returns a standardized copy of a data set."""
        views = self.transform_views(dataset.view_batch())
        return MultiViewDataset([ xx.T for xx in views ], dataset.labels,
                                dataset.m, dataset.name)


def read_matrix(filename, iview=None):
    """Reads a matrix file (row = sample).

    Files ending on '.bin' are read as binary container, files ending on
    '.csv' as comma separated text, all others as whitespace separated text.

    Args:
        filename: Name of the file.
        iview: View index (for error messages) or None.

    Returns:
        (nrow, ncol) float array.
    """
    where = "" if iview is None else " (view {:d})".format(iview)
    if not os.path.exists(filename):
        raise DataError("Missing matrix file '{}'{}".format(filename, where))
    if filename.endswith(".bin"):
        with open(filename, "rb") as fp:
            content = fp.read()
        if content[:8] != MATRIX_MAGIC or len(content) < 24:
            raise DataError("Invalid binary matrix header in '{}'{}".format(
                filename, where))
        nrow, ncol = np.frombuffer(content[8:24], dtype="<u8")
        data = np.frombuffer(content[24:], dtype="<f8")
        if data.size != nrow * ncol:
            raise DataError("Binary matrix '{}'{} holds {:d} values instead "
                            "of {:d}".format(filename, where, data.size,
                                             int(nrow * ncol)))
        return data.reshape(int(nrow), int(ncol)).astype(float)
    delimiter = "," if filename.endswith(".csv") else None
    try:
        return np.loadtxt(filename, dtype=float, delimiter=delimiter, ndmin=2)
    except ValueError as exc:
        raise DataError("Can't parse matrix file '{}'{}: {}".format(
            filename, where, exc))


def write_matrix(filename, matrix):
    """Writes a matrix file (row = sample), format chosen by file extension
    (see read_matrix).

    Args:
        filename: Name of the file.
        matrix: (nrow, ncol) array.
    """
    matrix = np.array(matrix, dtype=float, ndmin=2)
    if filename.endswith(".bin"):
        header = np.array(matrix.shape, dtype="<u8").tobytes()
        with open(filename, "wb") as fp:
            fp.write(MATRIX_MAGIC + header)
            fp.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())
    else:
        delimiter = "," if filename.endswith(".csv") else " "
        np.savetxt(filename, matrix, fmt="%.17g", delimiter=delimiter)


class DatasetManifest:
    """Content of a data set manifest file."""

    # (type, shape, optional, default)
    arguments = {
        "name": ( "string", None, True, "dataset" ),
        "n": ( "integer", None, True, None ),
        "m": ( "integer", None, False, None ),
        "labels": ( "string", None, False, None ),
        "views": ( "stringarray", None, False, None ),
        "dims": ( "intarray", None, True, None ),
    }

    def __init__(self, **kwargs):
        for key in self.arguments:
            setattr(self, key, kwargs.get(key))
        if self.dims is not None and len(self.dims) != len(self.views):
            raise DataError("Manifest declares {:d} view files but {:d} "
                            "dimensions".format(len(self.views),
                                                len(self.dims)))


    @classmethod
    def fromdict(cls, configdict):
        return cls(**parse_arguments(cls.arguments, configdict, "dataset"))


def load_dataset(manifest_path):
    """Loads a data set described by a manifest file.

    Args:
        manifest_path: Name of the manifest (INI file with a [dataset]
            section). File names in it are relative to the manifest.

    Returns:
        Validated MultiViewDataset.
    """
    if not os.path.exists(manifest_path):
        raise DataError("Missing manifest file '{}'".format(manifest_path))
    printstatus("Reading data set manifest '{}'".format(manifest_path))
    parser = configparser.ConfigParser()
    try:
        parser.read(manifest_path)
    except configparser.Error as exc:
        raise DataError("Can't parse manifest '{}': {}".format(
            manifest_path, exc))
    if not parser.has_section("dataset"):
        raise DataError("Manifest '{}' has no [dataset] section".format(
            manifest_path))
    try:
        manifest = DatasetManifest.fromdict(dict(parser["dataset"]))
    except ConfigError as exc:
        raise DataError(str(exc))
    basedir = os.path.dirname(os.path.abspath(manifest_path))

    labelfile = os.path.join(basedir, manifest.labels)
    labels = read_matrix(labelfile).ravel()
    n = labels.shape[0] if manifest.n is None else manifest.n
    if labels.shape[0] != n:
        raise DataError("Labels file '{}' holds {:d} labels, manifest "
                        "declares n={:d}".format(labelfile, labels.shape[0], n))

    views = []
    for iview, viewfile in enumerate(manifest.views):
        matrix = read_matrix(os.path.join(basedir, viewfile), iview)
        if matrix.shape[0] != n:
            raise DataError("View {:d} has {:d} samples, expected {:d}"
                            .format(iview, matrix.shape[0], n))
        if manifest.dims is not None and matrix.shape[1] != manifest.dims[iview]:
            raise DataError("View {:d} has dimension {:d}, manifest declares "
                            "{:d}".format(iview, matrix.shape[1],
                                          manifest.dims[iview]))
        printstatus("View {:d}: {:d} samples x {:d} features".format(
            iview, matrix.shape[0], matrix.shape[1]), indentlevel=1)
        views.append(matrix.T)
    return MultiViewDataset(views, labels, manifest.m, manifest.name)


def save_dataset(dataset, directory, binary=False):
    """Writes a data set as manifest plus one matrix file per view.

    Args:
        dataset: MultiViewDataset to write.
        directory: Target directory (created if needed).
        binary: Whether the view matrices should use the binary container.

    Returns:
        Name of the manifest file.
    """
    os.makedirs(directory, exist_ok=True)
    ext = ".bin" if binary else ".txt"
    viewfiles = [ "view{:d}{}".format(iview + 1, ext)
                  for iview in range(dataset.v) ]
    for viewfile, samples in zip(viewfiles, dataset.view_batch()):
        write_matrix(os.path.join(directory, viewfile), samples)
    np.savetxt(os.path.join(directory, "labels.txt"), dataset.labels, fmt="%d")
    parser = configparser.ConfigParser()
    parser["dataset"] = {
        "name": dataset.name,
        "n": str(dataset.n),
        "m": str(dataset.m),
        "labels": "labels.txt",
        "views": " ".join(viewfiles),
        "dims": " ".join(str(dd) for dd in dataset.view_dims),
    }
    manifest_path = os.path.join(directory, "manifest.ini")
    printstatus("Writing data set manifest '{}'".format(manifest_path))
    with open(manifest_path, "w") as fp:
        parser.write(fp)
    return manifest_path


def make_splits(dataset, train_fraction, trial_seed):
    """Creates a stratified train/test partition.

    Args:
        dataset: MultiViewDataset.
        train_fraction: Fraction of samples in the training part (0 < f < 1).
        trial_seed: Seed of the partition.

    Returns:
        SplitIndices with sorted index vectors.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("Train fraction must be in (0, 1), got {}".format(
            train_fraction))
    counts = np.bincount(dataset.labels, minlength=dataset.m)
    single = np.flatnonzero(counts == 1)
    if len(single):
        raise DataError("Class {:d} has a single sample and can't be "
                        "stratified".format(int(single[0])))
    try:
        train, test = train_test_split(
            np.arange(dataset.n), train_size=train_fraction,
            stratify=dataset.labels, random_state=int(trial_seed))
    except ValueError as exc:
        raise DataError("Can't create stratified split: {}".format(exc))
    present = np.flatnonzero(counts)
    for idx, part in ((train, "training"), (test, "test")):
        missing = np.setdiff1d(present, dataset.labels[idx])
        if len(missing):
            raise DataError("Class {:d} missing from the {} split".format(
                int(missing[0]), part))
    return SplitIndices(np.sort(train), np.sort(test), int(trial_seed))
