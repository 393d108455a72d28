import os
import tempfile
import unittest
import numpy as np
import testutils
from ciml.common import ConfigError, DataError, MATRIX_MAGIC
from ciml.dataset import (MultiViewDataset, Standardizer, read_matrix,
                          write_matrix, load_dataset, save_dataset,
                          make_splits)


class DatasetTest(unittest.TestCase):

    def test_shapes(self):
        dataset = testutils.tiny_dataset(n=10, v=3, d=5)
        self.assertEqual(dataset.n, 10)
        self.assertEqual(dataset.v, 3)
        self.assertEqual(dataset.view_dims, [ 5, 5, 5 ])
        batch = dataset.view_batch([ 1, 4 ])
        self.assertEqual(batch[2].shape, (2, 5))
        self.assertTrue(np.array_equal(batch[0][1], dataset.views[0][:, 4]))
        self.assertEqual(dataset.concatenated().shape, (10, 15))


    def test_sample_count_mismatch_names_view(self):
        views = [ np.zeros((2, 5)), np.zeros((3, 4)) ]
        with self.assertRaises(DataError) as cm:
            MultiViewDataset(views, [ 0, 1, 0, 1, 0 ], 2)
        self.assertIn("View 1", str(cm.exception))


    def test_invalid_labels(self):
        with self.assertRaises(DataError):
            MultiViewDataset([ np.zeros((2, 3)) ], [ 0, 1, 2 ], 2)
        with self.assertRaises(DataError):
            MultiViewDataset([ np.zeros((2, 3)) ], [ 0, 0.5, 1 ], 2)


    def test_non_finite_view(self):
        view = np.zeros((2, 3))
        view[1, 2] = np.nan
        with self.assertRaises(DataError) as cm:
            MultiViewDataset([ np.zeros((1, 3)), view ], [ 0, 1, 0 ], 2)
        self.assertIn("View 1", str(cm.exception))


    def test_subset(self):
        dataset = testutils.tiny_dataset(n=12)
        sub = dataset.subset([ 3, 7 ])
        self.assertEqual(sub.n, 2)
        self.assertTrue(np.array_equal(sub.labels, dataset.labels[[ 3, 7 ]]))


class MatrixFileTest(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.matrix = np.random.default_rng(1).standard_normal((7, 3))


    def tearDown(self):
        self.tmpdir.cleanup()


    def test_formats_preserve_values(self):
        for ext in (".txt", ".csv", ".bin"):
            filename = os.path.join(self.tmpdir.name, "matrix" + ext)
            write_matrix(filename, self.matrix)
            self.assertTrue(np.array_equal(read_matrix(filename), self.matrix),
                            ext)


    def test_binary_header(self):
        filename = os.path.join(self.tmpdir.name, "matrix.bin")
        write_matrix(filename, self.matrix)
        with open(filename, "rb") as fp:
            content = fp.read()
        self.assertEqual(content[:8], MATRIX_MAGIC)
        self.assertEqual(len(content), 24 + 8 * self.matrix.size)
        with open(filename, "wb") as fp:
            fp.write(b"NOTAMAT!" + content[8:])
        with self.assertRaises(DataError):
            read_matrix(filename)


    def test_missing_file_names_view(self):
        with self.assertRaises(DataError) as cm:
            read_matrix(os.path.join(self.tmpdir.name, "none.txt"), 2)
        self.assertIn("view 2", str(cm.exception))


class ManifestTest(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()


    def tearDown(self):
        self.tmpdir.cleanup()


    def test_save_and_load(self):
        dataset = testutils.tiny_dataset(n=9, v=2, d=3)
        for binary in (False, True):
            directory = os.path.join(self.tmpdir.name, str(binary))
            manifest = save_dataset(dataset, directory, binary)
            loaded = load_dataset(manifest)
            self.assertEqual(loaded.m, dataset.m)
            self.assertEqual(loaded.name, dataset.name)
            self.assertTrue(np.array_equal(loaded.labels, dataset.labels))
            for view, orig in zip(loaded.views, dataset.views):
                self.assertTrue(np.array_equal(view, orig))


    def test_dimension_mismatch(self):
        dataset = testutils.tiny_dataset(n=6, v=2, d=3)
        manifest = save_dataset(dataset, self.tmpdir.name)
        with open(manifest, "r") as fp:
            content = fp.read()
        with open(manifest, "w") as fp:
            fp.write(content.replace("dims = 3 3", "dims = 3 4"))
        with self.assertRaises(DataError) as cm:
            load_dataset(manifest)
        self.assertIn("View 1", str(cm.exception))


    def test_missing_section(self):
        manifest = os.path.join(self.tmpdir.name, "manifest.ini")
        with open(manifest, "w") as fp:
            fp.write("[data]\nm = 2\n")
        with self.assertRaises(DataError):
            load_dataset(manifest)


class SplitTest(unittest.TestCase):

    def test_partition(self):
        dataset = testutils.tiny_dataset(n=30, m=3)
        splits = make_splits(dataset, 0.8, 5)
        self.assertEqual(len(splits.train), 24)
        self.assertEqual(len(np.intersect1d(splits.train, splits.test)), 0)
        self.assertTrue(np.array_equal(
            np.sort(np.concatenate((splits.train, splits.test))),
            np.arange(30)))
        for part in (splits.train, splits.test):
            self.assertEqual(set(dataset.labels[part]), { 0, 1, 2 })


    def test_deterministic(self):
        dataset = testutils.tiny_dataset(n=30)
        first = make_splits(dataset, 0.7, 11)
        second = make_splits(dataset, 0.7, 11)
        self.assertTrue(np.array_equal(first.train, second.train))
        self.assertTrue(np.array_equal(first.test, second.test))


    def test_single_sample_class(self):
        dataset = MultiViewDataset([ np.zeros((1, 5)) ], [ 0, 0, 1, 1, 2 ], 3)
        with self.assertRaises(DataError):
            make_splits(dataset, 0.6, 0)


    def test_invalid_fraction(self):
        dataset = testutils.tiny_dataset(n=12)
        with self.assertRaises(ConfigError):
            make_splits(dataset, 1.0, 0)


class StandardizerTest(unittest.TestCase):

    def test_training_statistics(self):
        dataset = testutils.tiny_dataset(n=40)
        indices = np.arange(0, 40, 2)
        scaler = Standardizer.fit(dataset, indices)
        views = scaler.transform_views(dataset.view_batch(indices))
        for view in views:
            self.assertTrue(np.allclose(view.mean(axis=0), 0.0, atol=1e-12))
            self.assertTrue(np.allclose(view.std(axis=0), 1.0))
        with self.assertRaises(DataError):
            scaler.transform_views(dataset.view_batch()[:1])


def getsuites():
    """Returns the test suites defined in the module."""
    loader = unittest.defaultTestLoader
    return [ loader.loadTestsFromTestCase(case) for case in
             (DatasetTest, MatrixFileTest, ManifestTest, SplitTest,
              StandardizerTest) ]


if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(unittest.TestSuite(getsuites()))
