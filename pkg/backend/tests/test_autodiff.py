import struct

import pytest
import torch
from torch import nn

from navsim.autodiff import (
    CHECKPOINT_MAGIC, Affine, Conv2d, ParamSet, adam_step, affine_backward, affine_forward, conv2d_backward,
    conv2d_forward, dueling_aggregate, fan_in_uniform_, gradient_check, load_checkpoint, module_tensors, relu,
    restore_module, save_checkpoint, seeded_generator,
)
from navsim.errors import CheckpointError, NonFiniteGradientError, ShapeMismatchError


def randn(*shape, seed=0):
    return torch.randn(*shape, generator=seeded_generator(seed), dtype=torch.float64)


class TestAffine:
    def test_identity(self):
        x = randn(3, 4)
        assert torch.equal(affine_forward(x, torch.eye(4, dtype=torch.float64), torch.zeros(4, dtype=torch.float64)), x)

    def test_scalar_gradients(self):
        x, W, b = (torch.tensor([[2.0]]), torch.tensor([[3.0]]), torch.tensor([1.0]))
        assert affine_forward(x, W, b).item() == 7.0
        dx, dW, db = affine_backward(x, W, b, torch.ones(1, 1))
        assert (dx.item(), dW.item(), db.item()) == (3.0, 2.0, 1.0)

    def test_finite_differences(self):
        assert gradient_check(affine_forward, (randn(3, 4, seed=1), randn(4, 2, seed=2), randn(2, seed=3)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            affine_forward(randn(3, 4), randn(5, 2), randn(2))
        with pytest.raises(ShapeMismatchError):
            affine_backward(randn(3, 4), randn(4, 2), randn(2), randn(3, 3))


class TestConv2d:
    def test_unit_kernel_is_identity(self):
        x = randn(1, 1, 5, 5)
        assert torch.equal(conv2d_forward(x, torch.ones(1, 1, 1, 1, dtype=torch.float64)), x)

    def test_ones_kernel_on_constant_input(self):
        y = conv2d_forward(torch.full((1, 1, 6, 6), 2.0), torch.ones(1, 1, 3, 3))
        assert y.shape == (1, 1, 4, 4)
        assert torch.all(y == 18.0)

    def test_finite_differences(self):
        x, K, b = randn(2, 3, 6, 6, seed=4), randn(2, 3, 3, 3, seed=5), randn(2, seed=6)
        assert gradient_check(lambda x_, K_, b_: conv2d_forward(x_, K_, b_, 2), (x, K, b))

    def test_backward_without_bias(self):
        x, K = randn(1, 2, 5, 5), randn(3, 2, 3, 3)
        dx, dK, db = conv2d_backward(x, K, None, 1, torch.ones(1, 3, 3, 3, dtype=torch.float64))
        assert dx.shape == x.shape and dK.shape == K.shape and db is None

    def test_kernel_must_fit(self):
        with pytest.raises(ShapeMismatchError):
            conv2d_forward(randn(1, 1, 2, 2), randn(1, 1, 3, 3))
        with pytest.raises(ShapeMismatchError):
            conv2d_forward(randn(1, 2, 5, 5), randn(1, 3, 3, 3))

    def test_output_size(self):
        assert Conv2d(4, 8, 5, stride=2).output_size(60) == 28


class TestDueling:
    def test_example(self):
        q = dueling_aggregate(torch.tensor([[1.0]]), torch.tensor([[1.0, 2.0, 3.0]]))
        assert q.tolist() == [[0.0, 1.0, 2.0]]

    def test_constant_advantage(self):
        q = dueling_aggregate(torch.tensor([[2.5]]), torch.full((1, 225), 7.0))
        assert torch.all(q == 2.5)

    def test_preserves_argmax(self):
        V, A = randn(64, 1, seed=7), randn(64, 225, seed=8)
        assert torch.equal(dueling_aggregate(V, A).argmax(dim=1), A.argmax(dim=1))

    def test_finite_differences(self):
        assert gradient_check(dueling_aggregate, (randn(4, 1, seed=9), randn(4, 6, seed=10)))
        x = randn(5, 5, seed=11)
        assert gradient_check(relu, (x + 0.2 * x.sign(),))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dueling_aggregate(randn(4, 2), randn(4, 6))


def _toy_net():
    net = nn.Sequential(Affine(3, 4), nn.ReLU(), Affine(4, 1))
    return fan_in_uniform_(net, seeded_generator(0))


class TestAdam:
    def test_zero_gradients_leave_params(self):
        net = _toy_net()
        before = [p.detach().clone() for p in net.parameters()]
        params = ParamSet.from_module(net, lr=0.1)
        adam_step(params, {k: torch.zeros_like(v) for k, v in params.params.items()})
        assert all(torch.equal(a, b) for a, b in zip(before, net.parameters()))

    def test_first_step_closed_form(self):
        w = nn.Parameter(torch.tensor([1.0], dtype=torch.float64))
        params = ParamSet([("w", w)], lr=0.1)
        adam_step(params, {"w": torch.tensor([0.5], dtype=torch.float64)})
        assert w.item() == pytest.approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8), abs=1e-12)
        assert params.step_count == 1

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            net = _toy_net()
            params = ParamSet.from_module(net, lr=0.01)
            x = randn(8, 3, seed=12).float()
            for _ in range(5):
                for p in net.parameters():
                    p.grad = None
                net(x).pow(2).mean().backward()
                adam_step(params)
            runs.append([p.detach().clone() for p in net.parameters()])
        assert all(torch.equal(a, b) for a, b in zip(*runs))

    def test_nan_gradient_names_parameter(self):
        net = _toy_net()
        params = ParamSet.from_module(net)
        grads = {k: torch.zeros_like(v) for k, v in params.params.items()}
        grads["2.bias"] = torch.tensor([float("nan")])
        with pytest.raises(NonFiniteGradientError, match="2.bias"):
            adam_step(params, grads)

    def test_duplicate_names(self):
        p = nn.Parameter(torch.zeros(1))
        with pytest.raises(ValueError):
            ParamSet([("a", p), ("a", p)])


class TestCheckpoint:
    def test_round_trip_with_moments(self, tmp_path):
        net = _toy_net()
        params = ParamSet.from_module(net, lr=0.01)
        net(torch.ones(2, 3)).sum().backward()
        adam_step(params)
        path = tmp_path / "toy.ckpt"
        save_checkpoint(path, module_tensors(net, params), {"step": params.step_count, "level": "toy"})

        tensors, meta = load_checkpoint(path)
        assert meta == {"step": 1, "level": "toy"}
        assert "0.weight/exp_avg" in tensors

        fresh = fan_in_uniform_(nn.Sequential(Affine(3, 4), nn.ReLU(), Affine(4, 1)), seeded_generator(99))
        fresh_params = ParamSet.from_module(fresh, lr=0.01)
        restore_module(fresh, tensors, fresh_params, meta["step"])
        for a, b in zip(net.parameters(), fresh.parameters()):
            assert torch.equal(a, b)
        assert fresh_params.step_count == 1
        for name, m in params.moments().items():
            assert torch.equal(fresh_params.moments()[name], m)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "one.ckpt"
        save_checkpoint(path, {"w": torch.tensor([[1.0, 2.0]])}, {})
        data = path.read_bytes()
        assert data[:8] == CHECKPOINT_MAGIC
        assert struct.unpack_from("<II", data, 8) == (1, 2)
        assert data.endswith(struct.pack("<2f", 1.0, 2.0))

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + bytes(8))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "cut.ckpt"
        save_checkpoint(path, {"w": torch.ones(4, 4)}, {})
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_restore_checks_shapes(self):
        net = _toy_net()
        tensors = module_tensors(net)
        tensors["0.weight"] = torch.zeros(5, 5)
        with pytest.raises(CheckpointError, match="shape"):
            restore_module(_toy_net(), tensors)
