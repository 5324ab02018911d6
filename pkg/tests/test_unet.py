#!/usr/bin/env python
"""Tests for U-Net construction, forward pass and end-to-end gradients."""
import unittest
from collections import OrderedDict

import numpy as np

from cloudseg.core.errors import ConfigError, ShapeError
from cloudseg.core.gradcheck import grad_errors
from cloudseg.core.tensor import Tensor, mse_loss
from cloudseg.core.unet import (
    ProbabilityMask, UNetConfig, UNetParams, forward, init_params, layer_shapes, mask_of, param_count,
    predict,
)


class UNetConfigTests(unittest.TestCase):

    def test_param_count_smallest_net(self):
        cfg = UNetConfig(depth=1, base_channels=1, in_channels=3, out_channels=1, resolution=16)
        self.assertEqual(param_count(cfg), 146)
        self.assertEqual(init_params(cfg).count(), 146)

    def test_param_count_matches_init(self):
        cfg = UNetConfig(depth=3, base_channels=4, resolution=32)
        self.assertEqual(param_count(cfg), init_params(cfg).count())

    def test_layer_order(self):
        names = [n for n, _ in layer_shapes(UNetConfig(depth=2, base_channels=2, resolution=16))]
        self.assertEqual(names[:4], ["enc0.conv1", "enc0.conv2", "enc1.conv1", "enc1.conv2"])
        self.assertEqual(names[-1], "head")
        self.assertLess(names.index("dec1.up"), names.index("dec0.up"))

    def test_invalid_configs(self):
        with self.assertRaises(ConfigError):
            UNetConfig(depth=0).validate()
        with self.assertRaises(ConfigError):
            UNetConfig(base_channels=0).validate()
        with self.assertRaises(ConfigError):
            UNetConfig(depth=3, resolution=20).validate()


class ForwardTests(unittest.TestCase):

    def test_zero_params_give_half(self):
        cfg = UNetConfig(depth=2, base_channels=2, resolution=16)
        params = init_params(cfg)
        for _, t in params:
            t.data[...] = 0.0
        x = Tensor(np.random.default_rng(0).uniform(size=(2, 3, 16, 16)))
        out = forward(params, x)
        self.assertEqual(out.shape, (2, 1, 16, 16))
        self.assertTrue(np.all(out.data == 0.5))

    def test_shape_audit(self):
        cfg = UNetConfig(depth=3, base_channels=4, resolution=32)
        taps = {}
        out = forward(init_params(cfg), Tensor.zeros((1, 3, 32, 32)), taps=taps)
        self.assertEqual(taps["enc0"], (1, 4, 32, 32))
        self.assertEqual(taps["enc1"], (1, 8, 16, 16))
        self.assertEqual(taps["enc2"], (1, 16, 8, 8))
        self.assertEqual(taps["bott"], (1, 32, 4, 4))
        self.assertEqual(taps["dec2"], (1, 16, 8, 8))
        self.assertEqual(taps["dec0"], (1, 4, 32, 32))
        self.assertEqual(out.shape, (1, 1, 32, 32))

    def test_output_in_unit_interval(self):
        cfg = UNetConfig(depth=2, base_channels=4, resolution=16, seed=3)
        x = Tensor(np.random.default_rng(1).uniform(size=(3, 3, 16, 16)))
        out = forward(init_params(cfg), x).data
        self.assertTrue(np.all((out >= 0.0) & (out <= 1.0)))

    def test_saturated_head_stays_open(self):
        params = init_params(UNetConfig(depth=1, base_channels=2, resolution=8, seed=4))
        x = Tensor(np.random.default_rng(5).uniform(size=(2, 3, 8, 8)))
        for bias in (40.0, 200.0, -120.0):
            params["head.bias"].data[...] = bias
            out = forward(params, x).data
            with self.subTest(bias=bias):
                self.assertTrue(np.all((out > 0.0) & (out < 1.0)))
                ProbabilityMask(out[0, 0])

    def test_wrong_input_shape(self):
        params = init_params(UNetConfig(depth=2, base_channels=2, resolution=16))
        with self.assertRaises(ShapeError):
            forward(params, Tensor.zeros((1, 3, 32, 32)))
        with self.assertRaises(ShapeError):
            forward(params, Tensor.zeros((1, 1, 16, 16)))

    def test_seeded_init_is_deterministic(self):
        cfg = UNetConfig(depth=2, base_channels=2, resolution=16, seed=7)
        a, b = init_params(cfg), init_params(cfg)
        for (na, ta), (nb, tb) in zip(a, b):
            self.assertEqual(na, nb)
            self.assertEqual(ta.data.tobytes(), tb.data.tobytes())
        c = init_params(UNetConfig(depth=2, base_channels=2, resolution=16, seed=8))
        self.assertFalse(np.array_equal(a["enc0.conv1.weight"].data, c["enc0.conv1.weight"].data))
        self.assertTrue(np.all(a["enc0.conv1.bias"].data == 0.0))

    def test_predict_matches_forward(self):
        cfg = UNetConfig(depth=1, base_channels=2, resolution=8, seed=2)
        params = init_params(cfg)
        images = [np.random.default_rng(i).uniform(size=(3, 8, 8)).astype(np.float32) for i in range(5)]
        masks = predict(params, images, batch_size=2)
        self.assertEqual(len(masks), 5)
        single = mask_of(forward(params, Tensor(images[3][None])))
        np.testing.assert_allclose(masks[3].values, single.values, atol=1e-6)


class ProbabilityMaskTests(unittest.TestCase):

    def test_rejects_out_of_range(self):
        with self.assertRaises(ShapeError):
            ProbabilityMask(np.array([[0.5, 1.5]]))
        with self.assertRaises(ShapeError):
            ProbabilityMask(np.array([[np.nan, 0.5]]))
        with self.assertRaises(ShapeError):
            ProbabilityMask(np.zeros(4))


class EndToEndGradientTests(unittest.TestCase):
    """Full network loss against central differences, for every parameter tensor.

    ReLU and max-pool kinks make a few coordinates disagree at h=1e-3, so the
    pooled check bounds the 95th percentile and the median instead of the maximum.
    """

    @classmethod
    def setUpClass(cls):
        cls.cfg = UNetConfig(depth=2, base_channels=2, resolution=16, seed=11)
        cls.params = init_params(cls.cfg)
        rng = np.random.default_rng(12)
        cls.x = Tensor(rng.uniform(size=(1, 3, 16, 16)), dtype=np.float64)
        cls.y = Tensor(rng.choice([0.0, 0.5, 1.0], size=(1, 1, 16, 16)), dtype=np.float64)
        cls.errors = OrderedDict((name, grad_errors(cls._loss_wrt(name), cls.params[name]))
                                 for name in cls.params.names())

    @classmethod
    def _loss_wrt(cls, name):
        def f(t, tape):
            swapped = OrderedDict((n, t if n == name else p) for n, p in cls.params)
            params = UNetParams(config=cls.cfg, tensors=swapped)
            return mse_loss(forward(params, cls.x, tape), cls.y, tape=tape)
        return f

    def test_every_parameter_checked(self):
        self.assertEqual(list(self.errors), self.params.names())
        self.assertEqual(sum(e.size for e in self.errors.values()), self.params.count())
        for kind in ("enc0.conv1.bias", "bott.conv2.weight", "dec1.up.weight", "dec0.conv1.weight", "head.bias"):
            self.assertIn(kind, self.errors)

    def test_pooled_agreement(self):
        pooled = np.concatenate(list(self.errors.values()))
        self.assertTrue(np.all(np.isfinite(pooled)))
        self.assertLess(float(np.percentile(pooled, 95)), 1e-3)
        self.assertLess(float(np.median(pooled)), 1e-4)

    def test_each_tensor_agrees(self):
        for name, errors in self.errors.items():
            with self.subTest(name=name):
                self.assertTrue(np.all(np.isfinite(errors)))
                self.assertLess(float(np.median(errors)), 1e-2)

    def test_selected_weights_tight(self):
        for name in ("enc0.conv1.weight", "bott.conv2.weight", "head.weight"):
            errors = self.errors[name]
            with self.subTest(name=name):
                self.assertLess(float(np.percentile(errors, 95)), 1e-3)
                self.assertLess(float(np.median(errors)), 1e-4)


if __name__ == '__main__':
    unittest.main()
