import os
import tempfile
import unittest
import numpy as np
import torch
from torch.func import functional_call
import testutils
from ciml.common import ConfigError, DataError
from ciml.dataset import make_splits
from ciml.encoder import as_tensor, encode_view, encode_stochastic
from ciml.trainer import (TrainConfig, init_state, draw_noise,
                          compute_breakdown, mine_step, train_epoch, fit,
                          infer_representation, predict, save_checkpoint,
                          load_checkpoint)


def training_batch(state, dataset, rows):
    train = state.standardizer.transform(dataset.subset(state.train_index))
    views = [ as_tensor(xx[rows]) for xx in train.view_batch() ]
    labels = torch.as_tensor(train.labels[rows])
    return views, labels, torch.as_tensor(rows)


class TrainConfigTest(unittest.TestCase):

    def test_invalid_values(self):
        for changes in ({ "epochs": 0 }, { "batch_size": 1 }, { "d_c": 0 },
                        { "variant": "CIML-v3" },
                        { "entropy_estimator": "knn" }, { "beta2": -1.0 }):
            with self.assertRaises(ConfigError, msg=str(changes)):
                testutils.tiny_config(**changes)


    def test_dict_roundtrip(self):
        config = testutils.tiny_config(variant="CIML-v2", lr=0.01)
        copy = TrainConfig.fromdict(*config.todict())
        self.assertEqual(copy.todict(), config.todict())


    def test_variant_weights(self):
        config = testutils.tiny_config(beta3=2.0, beta4=0.5)
        self.assertEqual(config.effective_weights(), (2.0, 0.5))
        self.assertEqual(config.replace(variant="CIML-v1").effective_weights(),
                         (0.0, 0.5))
        self.assertEqual(config.replace(variant="CIML-v2").effective_weights(),
                         (2.0, 0.0))


class InitTest(unittest.TestCase):

    def setUp(self):
        self.dataset = testutils.tiny_dataset(n=32, v=3, d=4)
        self.config = testutils.tiny_config()


    def test_structure(self):
        state = init_state(self.config, self.dataset, np.arange(20))
        self.assertEqual(len(state.model.common_encoders), 3)
        self.assertEqual(len(state.model.unique_encoders), 3)
        self.assertEqual(tuple(state.model.C.shape), (20, 2))
        self.assertEqual(sorted(state.mines.nets.keys()),
                         [ "u0_c", "u0_u1", "u0_u2", "u1_c", "u1_u2",
                           "u2_c" ])


    def test_same_seed_same_parameters(self):
        first = init_state(self.config, self.dataset).model.state_dict()
        second = init_state(self.config, self.dataset).model.state_dict()
        for key in first:
            self.assertTrue(torch.equal(first[key], second[key]), key)
        other = init_state(self.config.replace(seed=1),
                           self.dataset).model.state_dict()
        self.assertFalse(torch.equal(first["classifier.weight"],
                                     other["classifier.weight"]))


    def test_common_variable_is_mean_encoding(self):
        state = init_state(self.config, self.dataset)
        views = state.standardizer.transform_views(self.dataset.view_batch())
        with torch.no_grad():
            encodings = [ encode_view(enc, xx) for enc, xx in
                          zip(state.model.common_encoders, views) ]
        expected = torch.stack(encodings).mean(dim=0)
        self.assertTrue(torch.allclose(state.model.C.detach(), expected))


    def test_init_leaves_global_rng(self):
        torch.manual_seed(3)
        expected = torch.rand(1)
        torch.manual_seed(3)
        init_state(self.config, self.dataset)
        self.assertTrue(torch.equal(torch.rand(1), expected))


class GradientTest(unittest.TestCase):
    """Analytic gradients against central differences with frozen noise."""

    PARAMETERS = ("classifier.weight", "unique_encoders.0.mean_head.weight",
                  "unique_encoders.1.logvar_head.bias",
                  "common_encoders.1.trunk.0.weight",
                  "common_head.logvar_head.weight", "C")

    def _check(self, config):
        dataset = testutils.tiny_dataset(n=32, v=2, d=4)
        state = init_state(config, dataset)
        rows = np.arange(0, 32, 2)
        views, labels, rows = training_batch(state, dataset, rows)
        noise = draw_noise(state, len(rows) * config.mc_samples, 0, 0)
        for name in self.PARAMETERS:
            for term in ("ce", "l_common", "l_unique", "total"):
                def closure(param):
                    breakdown, _ = functional_call(
                        state.model, { name: param },
                        (views, labels, rows, noise, state.mines))
                    return getattr(breakdown, term)
                param = dict(state.model.named_parameters())[name]
                param = param.detach().clone().requires_grad_(True)
                self.assertTrue(torch.autograd.gradcheck(
                    closure, (param,), eps=1e-6, atol=1e-7, rtol=1e-4,
                    check_undefined_grad=False), (name, term))


    def test_posterior_entropy(self):
        self._check(testutils.tiny_config(hidden_dims=[ 4 ],
                                          common_hidden=[ 3 ],
                                          mine_hidden=[ 4 ]))


    def test_batch_entropy_and_mc_samples(self):
        self._check(testutils.tiny_config(hidden_dims=[ 4 ],
                                          common_hidden=[ 3 ],
                                          mine_hidden=[ 4 ], mc_samples=2,
                                          entropy_estimator="batch"))


class StepTest(unittest.TestCase):

    def setUp(self):
        self.dataset = testutils.tiny_dataset(n=32, v=2, d=4)


    def _snapshot(self, module):
        return { key: val.detach().clone()
                 for key, val in module.state_dict().items() }


    def _assert_same(self, module, snapshot, same=True):
        current = module.state_dict()
        equal = all(torch.equal(current[key], snapshot[key])
                    for key in snapshot)
        self.assertEqual(equal, same)


    def test_parameter_partition(self):
        state = init_state(testutils.tiny_config(), self.dataset)
        views, labels, rows = training_batch(state, self.dataset,
                                             np.arange(16))
        noise = draw_noise(state, 16, 0, 0)
        model_before = self._snapshot(state.model)
        mines_before = self._snapshot(state.mines)
        state.optimizer.zero_grad()
        breakdown, cache = compute_breakdown(state, views, labels, rows, noise)
        breakdown.total.backward()
        state.optimizer.step()
        self._assert_same(state.mines, mines_before)
        self._assert_same(state.model, model_before, same=False)

        model_after = self._snapshot(state.model)
        mine_step(state, cache, 0, 0)
        self._assert_same(state.model, model_after)
        self._assert_same(state.mines, mines_before, same=False)


    def test_disabled_common_loss(self):
        config = testutils.tiny_config(variant="CIML-v1", beta4=0.3)
        state = init_state(config, self.dataset)
        views, labels, rows = training_batch(state, self.dataset,
                                             np.arange(8))
        breakdown, _ = compute_breakdown(state, views, labels, rows,
                                         draw_noise(state, 8, 0, 0))
        self.assertEqual(float(breakdown.total),
                         float(breakdown.ce + 0.3 * breakdown.l_unique))


    def test_epoch_breakdown(self):
        config = testutils.tiny_config()
        state = init_state(config, self.dataset)
        train = state.standardizer.transform(self.dataset)
        state, breakdown = train_epoch(state, train)
        self.assertEqual(state.epoch, 1)
        self.assertAlmostEqual(
            breakdown.total, breakdown.ce + config.beta3 * breakdown.l_common
            + config.beta4 * breakdown.l_unique, places=9)
        for key in ("H_C", "alignment", "I_ZcY", "I_ZcC", "I_Zu0Y", "I_Zu1X",
                    "I_Zu1Zc", "I_Zu0Zu1"):
            self.assertIn(key, breakdown.terms)
        with self.assertRaises(DataError):
            train_epoch(state, train.subset(np.arange(10)))


    def test_loss_gradient_uses_moving_average(self):
        state = init_state(testutils.tiny_config(), self.dataset)
        views, labels, rows = training_batch(state, self.dataset,
                                             np.arange(16))
        noise = draw_noise(state, 16, 0, 0)
        weight = state.model.unique_encoders[0].mean_head.weight

        def gradient(ema):
            for net in state.mines.nets.values():
                net.ema.fill_(ema)
                net.ema_steps.fill_(5)
            state.model.zero_grad()
            breakdown, _ = compute_breakdown(state, views, labels, rows,
                                             noise)
            breakdown.terms["I_Zu0Zc"].backward()
            return float(breakdown.terms["I_Zu0Zc"]), weight.grad.clone()

        value_small, grad_small = gradient(1.0)
        value_large, grad_large = gradient(1e6)
        self.assertAlmostEqual(value_small, value_large, places=9)
        self.assertFalse(torch.allclose(grad_small, grad_large))
        for net in state.mines.nets.values():
            self.assertEqual(float(net.ema), 1e6)
            self.assertEqual(int(net.ema_steps), 5)


    def test_epoch_with_other_weights(self):
        state = init_state(testutils.tiny_config(), self.dataset)
        train = state.standardizer.transform(self.dataset)
        _, breakdown = train_epoch(
            state, train, state.config.replace(beta3=0.0, beta4=0.0))
        self.assertAlmostEqual(breakdown.total, breakdown.ce, places=9)
        state, breakdown = train_epoch(state, train,
                                       state.config.replace(mc_samples=2))
        self.assertEqual(state.epoch, 2)
        self.assertTrue(np.isfinite(breakdown.total))
        with self.assertRaises(ConfigError):
            train_epoch(state, train, state.config.replace(d_u=3))


    def test_plain_classifier_training(self):
        config = testutils.tiny_config(beta3=0.0, beta4=0.0, lr=1e-2,
                                       epochs=5)
        dataset = testutils.tiny_dataset(n=64, v=2, d=4)
        state = init_state(config, dataset)
        views, labels, rows = training_batch(state, dataset, np.arange(64))
        noise = draw_noise(state, 64, 99, 0)
        before = float(compute_breakdown(state, views, labels, rows,
                                         noise)[0].ce)
        train = state.standardizer.transform(dataset)
        for _ in range(config.epochs):
            train_epoch(state, train)
        after = float(compute_breakdown(state, views, labels, rows,
                                        noise)[0].ce)
        self.assertLess(after, before)


class FitTest(unittest.TestCase):

    def setUp(self):
        self.dataset = testutils.tiny_dataset(n=40, v=2, d=4)
        self.splits = make_splits(self.dataset, 0.75, 3)
        self.config = testutils.tiny_config(epochs=3)


    def test_history_and_determinism(self):
        state1, history1 = fit(self.config, self.dataset, self.splits)
        state2, history2 = fit(self.config, self.dataset, self.splits)
        self.assertEqual(len(history1), 3)
        self.assertEqual(state1.epoch, 3)
        self.assertEqual([ rec["loss"] for rec in history1.records ],
                         [ rec["loss"] for rec in history2.records ])
        self.assertEqual(history1.records[-1]["test_acc"],
                         history2.records[-1]["test_acc"])


    def test_resume_reproduces_run(self):
        full, _ = fit(self.config, self.dataset, self.splits)
        with tempfile.TemporaryDirectory() as tmpdir:
            filename = os.path.join(tmpdir, "checkpoint.pt")

            def callback(state, record):
                if state.epoch == 1:
                    save_checkpoint(state, filename)

            fit(self.config.replace(epochs=1), self.dataset, self.splits,
                callback=callback)
            resumed = load_checkpoint(filename, self.config)
        self.assertEqual(resumed.epoch, 1)
        resumed, history = fit(self.config, self.dataset, self.splits,
                               resumed)
        self.assertEqual(len(history), 3)
        final = full.model.state_dict()
        for key, val in resumed.model.state_dict().items():
            self.assertTrue(torch.equal(val, final[key]), key)
        views = self.dataset.view_batch(self.splits.test)
        self.assertTrue(np.array_equal(predict(resumed, views),
                                       predict(full, views)))


    def test_checkpoint_rejects_other_architecture(self):
        state, _ = fit(self.config.replace(epochs=1), self.dataset,
                       self.splits)
        with tempfile.TemporaryDirectory() as tmpdir:
            filename = os.path.join(tmpdir, "checkpoint.pt")
            save_checkpoint(state, filename)
            with self.assertRaises(ConfigError):
                load_checkpoint(filename, self.config.replace(d_c=3))
            with open(filename, "wb") as fp:
                fp.write(b"garbage")
            with self.assertRaises(DataError):
                load_checkpoint(filename)


    def test_early_stop(self):
        config = self.config.replace(epochs=20, patience=1, min_delta=1e6)
        _, history = fit(config, self.dataset, self.splits)
        self.assertEqual(len(history), 2)


class InferenceTest(unittest.TestCase):

    def test_representation(self):
        dataset = testutils.tiny_dataset(n=24, v=3, d=4)
        config = testutils.tiny_config(d_c=3, d_u=2)
        state = init_state(config, dataset)
        bundle = infer_representation(state, dataset.view_batch())
        self.assertEqual(bundle.width, 3 + 3 * 2)
        self.assertEqual(bundle.joint.shape, (24, 9))
        labels = predict(state, dataset.view_batch())
        self.assertTrue(np.all((labels >= 0) & (labels < dataset.m)))
        with self.assertRaises(DataError):
            infer_representation(state, dataset.view_batch()[:2])


    def test_single_view(self):
        dataset = testutils.tiny_dataset(n=24, v=1, d=4)
        state = init_state(testutils.tiny_config(), dataset)
        bundle = infer_representation(state, dataset.view_batch())
        self.assertEqual(bundle.joint.shape, (24, 4))
        # Initial C equals the encoding of the only view
        with torch.no_grad():
            expected = encode_stochastic(state.model.common_head,
                                         state.model.C).mean
        self.assertTrue(np.allclose(bundle.common, expected.numpy()))


def getsuites():
    """Returns the test suites defined in the module."""
    loader = unittest.defaultTestLoader
    return [ loader.loadTestsFromTestCase(case)
             for case in (TrainConfigTest, InitTest, GradientTest, StepTest,
                          FitTest, InferenceTest) ]


if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(unittest.TestSuite(getsuites()))
