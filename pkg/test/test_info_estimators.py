import math
import unittest
import numpy as np
import torch
import testutils
from ciml.common import DTYPE, DataError, NumericError
from ciml.encoder import StochasticEncoding
from ciml.info_estimators import (MIEstimate, MineNetwork, gk_alignment,
                                  gaussian_entropy,
                                  batch_gaussian_entropy,
                                  kl_to_standard_normal,
                                  predictive_lower_bound, check_labels,
                                  mine_estimate, mine_objective, train_mine)


class ClosedFormTest(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(4)


    def test_kl_matches_analytic_formula(self):
        for _ in range(100):
            batch, dim = self.rng.integers(1, 6, size=2)
            mean = self.rng.normal(size=(batch, dim))
            std = np.exp(self.rng.uniform(-2.0, 2.0, size=(batch, dim)))
            expected = np.mean(np.sum(
                0.5 * (std**2 + mean**2 - 1.0 - np.log(std**2)), axis=1))
            enc = StochasticEncoding(torch.from_numpy(mean),
                                     torch.from_numpy(std))
            value = float(kl_to_standard_normal(enc))
            self.assertLess(abs(value - expected),
                            1e-8 * max(abs(expected), 1e-300))


    def test_kl_of_standard_normal_is_zero(self):
        enc = StochasticEncoding(torch.zeros(3, 2, dtype=DTYPE),
                                 torch.ones(3, 2, dtype=DTYPE))
        self.assertEqual(float(kl_to_standard_normal(enc)), 0.0)


    def test_kl_positive_away_from_standard_normal(self):
        for _ in range(100):
            batch, dim = self.rng.integers(1, 5, size=2)
            mean = np.zeros((batch, dim))
            std = np.ones((batch, dim))
            row, col = self.rng.integers(batch), self.rng.integers(dim)
            if self.rng.random() < 0.5:
                mean[row, col] = self.rng.choice([ -1.0, 1.0 ]) \
                    * 10.0**self.rng.uniform(-3.0, 1.0)
            else:
                std[row, col] = np.exp(self.rng.choice([ -1.0, 1.0 ])
                                       * 10.0**self.rng.uniform(-3.0, 0.0))
            enc = StochasticEncoding(torch.from_numpy(mean),
                                     torch.from_numpy(std))
            self.assertGreater(float(kl_to_standard_normal(enc)), 0.0)


    def test_empty_batch(self):
        self.assertEqual(float(gaussian_entropy(np.zeros((0, 3)))), 0.0)
        enc = StochasticEncoding(torch.zeros(0, 3, dtype=DTYPE),
                                 torch.ones(0, 3, dtype=DTYPE))
        self.assertEqual(float(kl_to_standard_normal(enc)), 0.0)
        empty = np.zeros((0, 3))
        self.assertEqual(float(gk_alignment([ empty, empty ], empty)), 0.0)
        with self.assertRaises(DataError):
            batch_gaussian_entropy(empty)


    def test_gaussian_entropy(self):
        std = self.rng.uniform(0.1, 3.0, size=(5, 3))
        expected = np.mean(np.sum(0.5 * np.log(2.0 * np.pi * np.e * std**2),
                                  axis=1))
        self.assertAlmostEqual(float(gaussian_entropy(std)), expected,
                               places=12)
        with self.assertRaises(DataError):
            gaussian_entropy(np.zeros((2, 2)))


    def test_batch_entropy_uses_spread_of_rows(self):
        c_batch = np.array([ [ -2.0, 0.5 ], [ 2.0, -0.5 ] ])
        expected = gaussian_entropy(np.array([ [ 2.0, 0.5 ] ]))
        self.assertAlmostEqual(float(batch_gaussian_entropy(c_batch)),
                               float(expected), places=9)
        with self.assertRaises(DataError):
            batch_gaussian_entropy(np.zeros((1, 2)))


    def test_alignment(self):
        c_batch = self.rng.normal(size=(4, 3))
        self.assertEqual(float(gk_alignment([ c_batch, c_batch ], c_batch)),
                         0.0)
        shifted = c_batch + 1.0
        self.assertAlmostEqual(float(gk_alignment([ c_batch, shifted ],
                                                  c_batch)), 3.0, places=12)
        with self.assertRaises(DataError):
            gk_alignment([ c_batch[:, :2] ], c_batch)


    def test_alignment_invariant_under_row_permutation(self):
        encodings = [ self.rng.normal(size=(6, 3)) for _ in range(3) ]
        c_batch = self.rng.normal(size=(6, 3))
        perm = self.rng.permutation(6)
        self.assertAlmostEqual(
            float(gk_alignment([ ff[perm] for ff in encodings ],
                               c_batch[perm])),
            float(gk_alignment(encodings, c_batch)), places=12)


    def test_predictive_bound_grows_with_true_class_mass(self):
        values = []
        for mass in np.linspace(0.1, 0.9, 9):
            probs = [ [ mass, 0.5 * (1.0 - mass), 0.5 * (1.0 - mass) ] ]
            logits = torch.log(torch.tensor(probs, dtype=DTYPE))
            values.append(float(predictive_lower_bound(logits, [ 0 ])))
        self.assertTrue(all(np.diff(values) > 0.0))
        self.assertAlmostEqual(values[-1], math.log(0.9), places=12)


    def test_predictive_bound_of_batch(self):
        logits = torch.log(torch.tensor([ [ 0.5, 0.5 ], [ 0.25, 0.75 ] ],
                                        dtype=DTYPE))
        value = float(predictive_lower_bound(logits, [ 0, 0 ]))
        self.assertAlmostEqual(value, 0.5 * (math.log(0.5) + math.log(0.25)),
                               places=12)
        self.assertAlmostEqual(value, -1.0397, places=4)


    def test_predictive_lower_bound(self):
        logits = torch.zeros(5, 4, dtype=DTYPE)
        labels = torch.tensor([ 0, 1, 2, 3, 0 ])
        self.assertAlmostEqual(float(predictive_lower_bound(logits, labels)),
                               -math.log(4.0), places=12)
        sharp = torch.full((2, 3), -50.0, dtype=DTYPE)
        sharp[0, 1] = sharp[1, 2] = 50.0
        value = float(predictive_lower_bound(sharp, [ 1, 2 ]))
        self.assertLessEqual(value, 0.0)
        self.assertGreater(value, -1e-10)


    def test_label_validation(self):
        logits = torch.zeros(3, 2, dtype=DTYPE)
        with self.assertRaises(DataError):
            check_labels(logits, [ 0, 1 ])
        with self.assertRaises(DataError):
            check_labels(logits, [ 0, 1, 2 ])


class MineTest(unittest.TestCase):

    def test_zero_network_gives_zero(self):
        net = MineNetwork(2, 3, (4,), zero_init=True)
        a_batch = torch.randn(10, 2, dtype=DTYPE)
        b_batch = torch.randn(10, 3, dtype=DTYPE)
        self.assertAlmostEqual(float(mine_estimate(net, a_batch, b_batch)),
                               0.0, places=12)


    def test_identity_permutation(self):
        torch.manual_seed(1)
        net = MineNetwork(1, 1, (8,))
        a_batch = torch.randn(16, 1, dtype=DTYPE)
        perm = torch.arange(16)
        est = mine_estimate(net, a_batch, a_batch, perm=perm)
        t_values = net(a_batch, a_batch)
        expected = t_values.mean() - torch.log(torch.exp(t_values).mean())
        self.assertAlmostEqual(float(est), float(expected), places=12)
        # Jensen: mean T <= log mean exp T
        self.assertLessEqual(float(est), 1e-12)


    def test_moving_average_gradient_keeps_value(self):
        torch.manual_seed(3)
        net = MineNetwork(1, 1, (8,))
        a_batch = torch.randn(16, 1, dtype=DTYPE)
        b_batch = torch.randn(16, 1, dtype=DTYPE)
        perm = torch.randperm(16)

        def gradient(**kwargs):
            net.zero_grad()
            est = mine_estimate(net, a_batch, b_batch, perm=perm, **kwargs)
            est.value.backward()
            return float(est), net.net[0].weight.grad.clone()

        plain_value, plain_grad = gradient()
        # no moving average yet: plain gradient
        value, grad = gradient(ema_gradient=True)
        self.assertAlmostEqual(value, plain_value, places=12)
        self.assertTrue(torch.allclose(grad, plain_grad, rtol=1e-10,
                                       atol=1e-14))
        net.ema.fill_(1e6)
        net.ema_steps.fill_(5)
        value, grad = gradient(ema_gradient=True)
        self.assertAlmostEqual(value, plain_value, places=12)
        self.assertFalse(torch.allclose(grad, plain_grad))
        self.assertEqual(int(net.ema_steps), 5)


    def test_estimate_kinds(self):
        self.assertEqual(MIEstimate(torch.tensor(0.3), "mine").kind, "mine")
        with self.assertRaises(ValueError):
            MIEstimate(torch.tensor(0.3), "upper_bound")
        with self.assertRaises(NumericError):
            MIEstimate(torch.tensor(-0.1), "kl_upper_bound")
        with self.assertRaises(NumericError):
            MIEstimate(torch.tensor(0.1), "lower_bound_Y")
        with self.assertRaises(NumericError):
            MIEstimate(torch.tensor(float("nan")), "mine")


    def test_objective_value_and_moving_average(self):
        torch.manual_seed(2)
        net = MineNetwork(1, 1, (8,))
        a_batch = torch.randn(32, 1, dtype=DTYPE)
        b_batch = a_batch + 0.1 * torch.randn(32, 1, dtype=DTYPE)
        perm = torch.randperm(32)
        reference = mine_estimate(net, a_batch, b_batch, perm=perm)
        est, surrogate = mine_objective(net, a_batch, b_batch, perm=perm)
        self.assertAlmostEqual(float(surrogate), float(reference), places=12)
        self.assertAlmostEqual(float(est), float(reference), places=12)
        self.assertEqual(int(net.ema_steps), 1)
        mean_exp = float(torch.exp(net(a_batch, b_batch[perm])).mean())
        self.assertAlmostEqual(float(net.corrected_ema()), mean_exp, places=12)
        surrogate.backward()
        self.assertTrue(all(par.grad is not None for par in net.parameters()))


    def test_batch_validation(self):
        net = MineNetwork(1, 1, (4,))
        with self.assertRaises(DataError):
            mine_estimate(net, torch.zeros(3, 1), torch.zeros(2, 1))
        with self.assertRaises(DataError):
            mine_estimate(net, torch.zeros(1, 1), torch.zeros(1, 1))


    def test_dependent_pair_beats_independent_pair(self):
        gen = torch.Generator().manual_seed(5)
        a_data = torch.randn(2000, 1, generator=gen, dtype=DTYPE)
        noise = torch.randn(2000, 1, generator=gen, dtype=DTYPE)
        torch.manual_seed(0)
        dependent = train_mine(MineNetwork(1, 1, (16,)), a_data,
                               a_data + 0.3 * noise, steps=300, lr=5e-3,
                               seed=1)
        torch.manual_seed(0)
        independent = train_mine(MineNetwork(1, 1, (16,)), a_data, noise,
                                 steps=300, lr=5e-3, seed=1)
        self.assertGreater(dependent, independent + 0.3)


@unittest.skipUnless(testutils.ACCEPTANCE, "set CIML_ACCEPTANCE=1")
class MineOracleTest(unittest.TestCase):

    def _estimate(self, rho, seed):
        gen = torch.Generator().manual_seed(seed)
        a_data = torch.randn(10000, 1, generator=gen, dtype=DTYPE)
        noise = torch.randn(10000, 1, generator=gen, dtype=DTYPE)
        b_data = rho * a_data + math.sqrt(1.0 - rho**2) * noise
        torch.manual_seed(seed)
        net = MineNetwork(1, 1, (64, 64))
        return train_mine(net, a_data, b_data, steps=3000, lr=1e-3,
                          batch_size=512, seed=seed)


    def test_gaussian_pairs(self):
        for rho in (0.3, 0.6, 0.9):
            exact = -0.5 * math.log(1.0 - rho**2)
            self.assertLess(abs(self._estimate(rho, 1) - exact), 0.1, rho)


    def test_independent_pair(self):
        self.assertLessEqual(self._estimate(0.0, 2), 0.05)


def getsuites():
    """Returns the test suites defined in the module."""
    loader = unittest.defaultTestLoader
    return [ loader.loadTestsFromTestCase(case)
             for case in (ClosedFormTest, MineTest, MineOracleTest) ]


if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(unittest.TestSuite(getsuites()))
