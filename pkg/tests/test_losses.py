import math

import numpy as np
import pytest

from cameranet import losses
from cameranet.autodiff import Tensor
from cameranet.errors import SpaceTagError, ValidationError
from cameranet.image import SRGB, XYZ, ImageTensor
from cameranet.losses import (LossConfig, enhancement_loss, joint_loss,
                              restoration_loss)


def img(value, space, shape=(4, 4, 3)):
    return ImageTensor(np.full(shape, value, np.float32), space)


class TestRestorationLoss:
    def test_analytic_value_for_doubled_prediction(self):
        # pred = 2*gt with gt = 0.5 everywhere: linear term 0.5, log term
        # ln(2); total 0.5 + 0.6931 = 1.1931
        loss = restoration_loss(img(1.0, XYZ), img(0.5, XYZ))
        assert loss.item() == pytest.approx(0.5 + math.log(2.0), abs=1e-3)

    def test_zero_for_identical_inputs(self):
        a = img(0.3, XYZ)
        assert restoration_loss(a, img(0.3, XYZ)).item() == 0.0

    def test_log_term_clamps_small_values(self):
        # both below epsilon: log terms identical, only linear term left
        loss = restoration_loss(img(1e-6, XYZ), img(5e-5, XYZ),
                                epsilon=1e-4)
        assert loss.item() == pytest.approx(4.9e-5, rel=1e-3)

    def test_space_tag_enforced(self):
        with pytest.raises(SpaceTagError):
            restoration_loss(img(0.5, SRGB), img(0.5, SRGB))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            restoration_loss(img(0.5, XYZ), img(0.5, XYZ, (2, 2, 3)))


class TestEnhancementLoss:
    def test_is_mean_absolute_error(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0, 1, (4, 4, 3)).astype(np.float32)
        b = rng.uniform(0, 1, (4, 4, 3)).astype(np.float32)
        loss = enhancement_loss(ImageTensor(a, SRGB), ImageTensor(b, SRGB))
        assert loss.item() == pytest.approx(np.abs(a - b).mean(), rel=1e-6)

    def test_space_tag_enforced(self):
        with pytest.raises(SpaceTagError):
            enhancement_loss(img(0.5, XYZ), img(0.5, XYZ))


class TestJointLoss:
    def setup_method(self):
        rng = np.random.default_rng(1)
        self.rp = ImageTensor(rng.uniform(0.1, 1, (4, 4, 3)).astype(
            np.float32), XYZ)
        self.rg = ImageTensor(rng.uniform(0.1, 1, (4, 4, 3)).astype(
            np.float32), XYZ)
        self.ep = ImageTensor(rng.uniform(0, 1, (4, 4, 3)).astype(
            np.float32), SRGB)
        self.eg = ImageTensor(rng.uniform(0, 1, (4, 4, 3)).astype(
            np.float32), SRGB)

    def joint(self, lam):
        return joint_loss(self.rp, self.rg, self.ep, self.eg,
                          LossConfig(lambda_weight=lam)).item()

    def test_endpoints_are_exact_passthroughs(self):
        assert self.joint(1.0) == restoration_loss(self.rp, self.rg).item()
        assert self.joint(0.0) == enhancement_loss(self.ep, self.eg).item()

    def test_midpoint_is_convex_combination(self):
        l_rest = restoration_loss(self.rp, self.rg).item()
        l_enh = enhancement_loss(self.ep, self.eg).item()
        assert self.joint(0.5) == pytest.approx(
            0.5 * l_rest + 0.5 * l_enh, rel=1e-6)

    def test_gradient_is_lambda_weighted_sum(self):
        # d(joint)/d(pred) must equal the weighted sum of the single-loss
        # gradients computed separately
        lam = 0.7
        grads = {}
        for key, weight in (("joint", None), ("rest", lam),
                            ("enh", 1 - lam)):
            rp = Tensor(self.rp.data.transpose(2, 0, 1)[None],
                        requires_grad=True)
            ep = Tensor(self.ep.data.transpose(2, 0, 1)[None],
                        requires_grad=True)
            if key == "joint":
                loss = joint_loss(rp, self.rg, ep, self.eg,
                                  LossConfig(lambda_weight=lam))
            elif key == "rest":
                loss = restoration_loss(rp, self.rg)
            else:
                loss = enhancement_loss(ep, self.eg)
            loss.backward()
            grads[key] = (rp.grad, ep.grad)
        assert np.abs(grads["joint"][0] - lam * grads["rest"][0]).max() < 1e-7
        assert np.abs(grads["joint"][1] -
                      (1 - lam) * grads["enh"][1]).max() < 1e-7

    def test_lambda_range_validated(self):
        with pytest.raises(ValidationError):
            LossConfig(lambda_weight=1.5)
        with pytest.raises(ValidationError):
            LossConfig(epsilon=0.0)
