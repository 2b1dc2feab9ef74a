import math

import numpy as np
import pytest

from cvsynth import (
    DegenerateBatchError,
    DeterminismError,
    DimensionError,
    ParameterError,
    SplitMix64,
    Tensor,
    cross_entropy,
    grad_check,
    load_tensor,
    matmul,
    save_tensor,
    softmax,
)

from oracles import matmul_loops


class TestTensor:
    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            Tensor([1.0, np.nan])
        with pytest.raises(ParameterError):
            Tensor([np.inf])

    def test_grad_accumulation(self):
        t = Tensor([1.0, 2.0])
        t.add_grad(np.array([1.0, 1.0]))
        t.add_grad(np.array([0.5, 0.25]))
        assert np.array_equal(t.grad, [1.5, 1.25])
        with pytest.raises(DimensionError):
            t.add_grad(np.zeros(3))

    def test_scalar_tensor_stays_zero_dim(self):
        t = Tensor(np.asarray(2.5))
        assert t.shape == ()
        assert float(t.data) == 2.5


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(a, b).data, b.data)

    def test_annihilating_product(self):
        a = Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = Tensor([[0.0, 0.0], [0.0, 1.0]])
        assert np.array_equal(matmul(a, b).data, np.zeros((2, 2)))

    def test_matches_triple_loop_oracle(self):
        rng = SplitMix64(7)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        got = matmul(Tensor(a), Tensor(b)).data
        assert np.max(np.abs(got - matmul_loops(a, b))) < 1e-12

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError) as err:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        assert "(2, 3)" in str(err.value)

    def test_backward_accumulates_into_both_inputs(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        out = matmul(a, b)
        out.vjp(np.ones((1, 1)))
        assert np.array_equal(a.grad, [[3.0, 4.0]])
        assert np.array_equal(b.grad, [[1.0], [2.0]])


class TestSoftmax:
    def test_uniform_inputs(self):
        out = softmax(Tensor([0.0, 0.0, 0.0]), axis=0).data
        assert np.max(np.abs(out - 1.0 / 3.0)) < 1e-15

    def test_stable_under_large_shift(self):
        out = softmax(Tensor([1000.0, 0.0]), axis=0).data
        assert np.all(np.isfinite(out))
        assert abs(out[0] - 1.0) < 1e-12
        assert out[1] >= 0.0

    def test_known_values(self):
        # exp([1,2,3]) / sum, evaluated in extended precision
        expected = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219]
        out = softmax(Tensor([1.0, 2.0, 3.0]), axis=0).data
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_partition_of_unity(self):
        rng = SplitMix64(11)
        for trial in range(20):
            x = Tensor(rng.normal(size=(3, 4, 5)) * 10.0)
            axis = trial % 3
            sums = softmax(x, axis=axis).data.sum(axis=axis)
            assert np.max(np.abs(sums - 1.0)) < 1e-12

    def test_axis_errors(self):
        with pytest.raises(DimensionError):
            softmax(Tensor(np.zeros((2, 0)), check=False), axis=1)
        with pytest.raises(DimensionError):
            softmax(Tensor([1.0, 2.0]), axis=2)


class TestCrossEntropy:
    def test_confident_correct_is_near_zero(self):
        logits = Tensor([[1e6, 0.0, 0.0]])
        assert float(cross_entropy(logits, [0]).data) < 1e-12

    def test_uniform_logits_give_log_c(self):
        for c in (2, 3, 7):
            logits = Tensor(np.zeros((5, c)))
            loss = float(cross_entropy(logits, [0] * 5).data)
            assert abs(loss - math.log(c)) < 1e-12

    def test_hand_computed_two_voxels(self):
        logits = Tensor([[1.0, 0.0], [0.0, 1.0]])
        loss = float(cross_entropy(logits, [1, 1]).data)
        # mean of -ln(1/(1+e)) and -ln(e/(1+e))
        assert abs(loss - 0.8132616875182228) < 1e-12

    def test_ignore_mask(self):
        logits = Tensor([[5.0, 0.0], [0.0, 5.0]])
        full = float(cross_entropy(logits, [0, 0]).data)
        masked = float(cross_entropy(logits, [0, -1], ignore=-1).data)
        assert masked < full

    def test_all_ignored_raises(self):
        with pytest.raises(DegenerateBatchError):
            cross_entropy(Tensor(np.zeros((2, 3))), [-1, -1], ignore=-1)

    def test_label_out_of_range(self):
        with pytest.raises(ParameterError):
            cross_entropy(Tensor(np.zeros((1, 3))), [3])


class TestGradCheck:
    def test_linear_op_is_exact(self):
        x = Tensor([1.0, -2.0, 3.0])

        def forward():
            out = Tensor(3.0 * x.data, check=False)
            out.vjp = lambda d: x.add_grad(3.0 * d)
            return out

        report = grad_check("scale-by-3", forward, [x], tolerance=1e-6)
        assert report.passed
        assert report.max_rel_error < 1e-6

    def test_softmax_gradient(self):
        rng = SplitMix64(3)
        x = Tensor(rng.normal(size=(5,)))
        report = grad_check("softmax", lambda: softmax(x, axis=0), [x],
                            epsilon=1e-5, tolerance=1e-6)
        assert report.passed

    def test_matmul_gradient(self):
        rng = SplitMix64(4)
        a = Tensor(rng.normal(size=(3, 3)))
        b = Tensor(rng.normal(size=(3, 3)))
        report = grad_check("matmul", lambda: matmul(a, b), [a, b], tolerance=1e-6)
        assert report.passed
        assert len(report.per_input_errors) == 2

    def test_cross_entropy_gradient(self):
        rng = SplitMix64(5)
        logits = Tensor(rng.normal(size=(6, 4)))
        labels = [0, 1, 2, 3, -1, 1]
        report = grad_check(
            "cross_entropy",
            lambda: cross_entropy(logits, labels, ignore=-1),
            [logits],
        )
        assert report.passed

    def test_non_deterministic_op_raises(self):
        x = Tensor([1.0])
        counter = {"n": 0}

        def forward():
            counter["n"] += 1
            out = Tensor(x.data + counter["n"], check=False)
            out.vjp = lambda d: x.add_grad(d)
            return out

        with pytest.raises(DeterminismError):
            grad_check("drifting", forward, [x])


class TestTensorFile:
    def test_round_trip(self, tmp_path):
        rng = SplitMix64(9)
        for shape in [(3,), (2, 4), (2, 3, 4, 2), ()]:
            arr = np.asarray(rng.normal(size=shape) if shape else 1.25)
            path = tmp_path / "t.cvst"
            save_tensor(path, arr)
            back = load_tensor(path)
            assert back.shape == arr.shape
            assert np.array_equal(back.data, arr)

    def test_magic_is_cvst(self, tmp_path):
        path = tmp_path / "t.cvst"
        save_tensor(path, np.zeros(2))
        assert path.read_bytes()[:4] == b"CVST"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.cvst"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ParameterError):
            load_tensor(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.cvst"
        save_tensor(path, np.zeros(4))
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ParameterError):
            load_tensor(path)

    def test_misaligned_payload_rejected(self, tmp_path):
        path = tmp_path / "t.cvst"
        save_tensor(path, np.zeros(4))
        raw = path.read_bytes()
        path.write_bytes(raw[:-3])
        with pytest.raises(ParameterError):
            load_tensor(path)


class TestSplitMix:
    def test_streams_reproducible(self):
        a = SplitMix64(42).fork("x")
        b = SplitMix64(42).fork("x")
        assert np.array_equal(a.normal(size=(8,)), b.normal(size=(8,)))

    def test_forks_are_independent_of_order(self):
        root = SplitMix64(1)
        first = root.fork("alpha").normal(size=(4,))
        root2 = SplitMix64(1)
        root2.fork("beta")
        second = root2.fork("alpha").normal(size=(4,))
        assert np.array_equal(first, second)

    def test_block_matches_scalar_path(self):
        a = SplitMix64(123)
        b = SplitMix64(123)
        block = a.u64_block(5)
        singles = [b.next_u64() for _ in range(5)]
        assert [int(v) for v in block] == singles
