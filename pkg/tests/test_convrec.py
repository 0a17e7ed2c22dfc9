"""Convolution via unfold + counted matmul, and fixed-recurrence dynamics."""

import numpy as np
import pytest

from intspike import (ConvCorrTrace, ConvSpec, IntTensor, LifLayerState,
                      LifParams, OpCounter, RecurrentWeights, conv_corr_update,
                      conv_error_feedback, conv_forward, init_recurrent,
                      lif_step, recurrent_step, unfold, update_pre_trace,
                      voltage_tap)
from intspike.convrec import REC_TAP_BITS
from intspike.tensor import ShapeError
from intspike.weights import MixedPrecisionLayerWeights, requantize

import exact_reference as ref
from conftest import N_PROPERTY


def kernel_weights(vals, shadow_bits=8, lp_bits=8):
    arr = np.asarray(vals)
    w = MixedPrecisionLayerWeights(
        shadow=IntTensor(arr, shadow_bits),
        lp=IntTensor(np.zeros(arr.shape, dtype=np.int64), lp_bits),
        eta_shift=8, decay_shift=12, clip=1 << 10)
    requantize(w)
    return w


class TestConvSpec:
    def test_geometry(self):
        spec = ConvSpec(1, 32, 5, 2, 0)
        assert spec.out_hw(28, 28) == (12, 12)
        assert spec.patch_len == 25

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            ConvSpec(0, 1, 3, 1, 0)
        with pytest.raises(ValueError):
            ConvSpec(1, 1, 3, 0, 0)
        with pytest.raises(ValueError):
            ConvSpec(1, 1, 3, 1, -1)

    def test_too_small_input(self):
        with pytest.raises(ShapeError):
            ConvSpec(1, 1, 5, 1, 0).out_hw(4, 4)


class TestUnfold:
    def test_whole_input_single_patch(self):
        spec = ConvSpec(1, 1, 3, 1, 0)
        x = IntTensor(np.arange(9).reshape(1, 1, 3, 3), 8)
        p = unfold(x, spec)
        assert p.shape == (1, 1, 1, 1, 3, 3)
        assert np.array_equal(p.data[0, 0, 0, 0], x.data[0, 0])

    def test_disjoint_tiling(self):
        spec = ConvSpec(1, 1, 2, 2, 0)
        x = IntTensor(np.arange(16).reshape(1, 1, 4, 4), 8)
        p = unfold(x, spec)
        assert p.shape == (1, 2, 2, 1, 2, 2)
        assert p.data[0, 0, 0, 0].tolist() == [[0, 1], [4, 5]]
        assert p.data[0, 1, 1, 0].tolist() == [[10, 11], [14, 15]]

    def test_matches_index_oracle(self, rng):
        for _ in range(100):
            c = int(rng.integers(1, 3))
            h = int(rng.integers(5, 9))
            k = int(rng.integers(2, min(5, h) + 1))
            stride = int(rng.integers(1, 3))
            pad = int(rng.integers(0, 2))
            spec = ConvSpec(c, 1, k, stride, pad)
            x = rng.integers(-10, 10, size=(2, c, h, h))
            p = unfold(IntTensor(x, 8), spec)
            want = ref.unfold_ref(x.tolist(), k, stride, pad)
            b, oh, ow = p.shape[:3]
            got = p.data.reshape(b, oh, ow, -1).tolist()
            assert got == want

    def test_zero_ops_charged(self):
        spec = ConvSpec(1, 1, 2, 1, 0)
        x = IntTensor(np.ones((1, 1, 3, 3), dtype=np.int64), 8)
        c = OpCounter()
        unfold(x, spec)
        assert all(v == 0 for v in c.snapshot().values())

    def test_fold_conservation(self, rng):
        # Scattering every patch element back to its source position gives
        # exactly (coverage count) copies of each input element.
        for _ in range(N_PROPERTY):
            c = int(rng.integers(1, 3))
            h = int(rng.integers(4, 8))
            k = int(rng.integers(2, min(4, h) + 1))
            stride = int(rng.integers(1, 3))
            spec = ConvSpec(c, 1, k, stride, 0)
            x = rng.integers(-20, 20, size=(1, c, h, h))
            p = unfold(IntTensor(x, 8), spec).data
            folded = np.zeros_like(x)
            cover = np.zeros_like(x)
            oh, ow = spec.out_hw(h, h)
            for oy in range(oh):
                for ox in range(ow):
                    ys, xs = oy * stride, ox * stride
                    folded[0, :, ys:ys + k, xs:xs + k] += p[0, oy, ox]
                    cover[0, :, ys:ys + k, xs:xs + k] += 1
            assert np.array_equal(folded, x * cover)

    def test_channel_mismatch(self):
        spec = ConvSpec(3, 1, 2, 1, 0)
        with pytest.raises(ShapeError):
            unfold(IntTensor(np.zeros((1, 2, 4, 4), dtype=np.int64), 8), spec)


class TestConvForward:
    def test_ones_kernel_counts_window(self):
        spec = ConvSpec(1, 1, 5, 1, 0)
        x = IntTensor(np.ones((1, 1, 8, 8), dtype=np.int64), 2, binary=True)
        w = kernel_weights(np.ones((1, 1, 5, 5), dtype=np.int64))
        out = conv_forward(x, w, spec)
        assert (out.data == 25).all()
        assert out.shape == (1, 1, 4, 4)

    def test_zero_kernel(self, rng):
        spec = ConvSpec(2, 3, 3, 1, 0)
        x = IntTensor(rng.integers(0, 2, size=(2, 2, 6, 6)), 2, binary=True)
        w = kernel_weights(np.zeros((3, 2, 3, 3), dtype=np.int64))
        out = conv_forward(x, w, spec)
        assert not out.data.any()

    def test_matches_six_loop_oracle(self, rng):
        for _ in range(100):
            ci = int(rng.integers(1, 3))
            co = int(rng.integers(1, 4))
            h = int(rng.integers(5, 9))
            k = int(rng.integers(2, 5))
            stride = int(rng.integers(1, 3))
            pad = int(rng.integers(0, 2))
            if (h + 2 * pad - k) // stride + 1 < 1:
                continue
            spec = ConvSpec(ci, co, k, stride, pad)
            x = rng.integers(0, 2, size=(2, ci, h, h))
            kv = rng.integers(-50, 50, size=(co, ci, k, k))
            out = conv_forward(IntTensor(x, 2, binary=True),
                               kernel_weights(kv), spec, OpCounter())
            want = ref.conv_forward_ref(x.tolist(), kv.tolist(), k, stride, pad)
            assert out.data.tolist() == want

    def test_event_counting_charges_per_window_read(self):
        # One centered spike under a 3x3 stride-1 kernel is read by 9
        # windows; with 2 output channels that is 18 MACs.
        spec = ConvSpec(1, 2, 3, 1, 0)
        x = np.zeros((1, 1, 5, 5), dtype=np.int64)
        x[0, 0, 2, 2] = 1
        kv = np.ones((2, 1, 3, 3), dtype=np.int64)
        c = OpCounter(mode="event")
        conv_forward(IntTensor(x, 2, binary=True), kernel_weights(kv), spec, c)
        assert c.total("add") == 9 * 2
        assert c.total("mul") == 0  # binary data operand


class TestConvTrace:
    def test_zero_gate_unchanged(self):
        spec = ConvSpec(1, 2, 2, 1, 0)
        trace = ConvCorrTrace.zeros(1, spec, 2, 2, 32)
        tp = IntTensor(np.ones((1, 1, 3, 3), dtype=np.int64), 16)
        sg = IntTensor(np.zeros((1, 2, 2, 2), dtype=np.int64), 2, binary=True)
        conv_corr_update(trace, tp, sg, spec)
        assert not trace.data.data.any()

    def test_single_location_slab(self):
        spec = ConvSpec(1, 2, 2, 1, 0)
        trace = ConvCorrTrace.zeros(1, spec, 2, 2, 32)
        tp = IntTensor(np.ones((1, 1, 3, 3), dtype=np.int64), 16)
        sg_arr = np.zeros((1, 2, 2, 2), dtype=np.int64)
        sg_arr[0, 1, 0, 1] = 1
        conv_corr_update(trace, tp, IntTensor(sg_arr, 2, binary=True), spec)
        assert trace.data.data.sum() == 4  # one 2x2 slab of ones
        assert (trace.data.data[0, 1, 0, 1] == 1).all()
        assert not trace.data.data[0, 0].any()

    def test_matches_loop_oracle_over_steps(self, rng):
        spec = ConvSpec(2, 3, 2, 1, 0)
        oh = ow = 3
        trace = ConvCorrTrace.zeros(2, spec, oh, ow, 32)
        want = np.zeros((2, 3, oh, ow, 2, 2, 2), dtype=object)
        for _step in range(3):
            tp = rng.integers(0, 30, size=(2, 2, 4, 4))
            sg = rng.integers(0, 2, size=(2, 3, oh, ow))
            conv_corr_update(trace, IntTensor(tp, 16),
                             IntTensor(sg, 2, binary=True), spec, OpCounter())
            patches = ref.unfold_ref(tp.tolist(), 2, 1, 0)
            for b in range(2):
                for co in range(3):
                    for oy in range(oh):
                        for ox in range(ow):
                            if sg[b, co, oy, ox]:
                                flat = np.array(patches[b][oy][ox]).reshape(2, 2, 2)
                                want[b, co, oy, ox] += flat
        assert trace.data.data.tolist() == want.tolist()


class TestConvFeedback:
    def test_zero_error(self):
        spec = ConvSpec(1, 2, 2, 1, 0)
        head = kernel_weights(np.ones((4, 2 * 3 * 3), dtype=np.int64))
        err = IntTensor(np.zeros((1, 4), dtype=np.int64), 32)
        fb = conv_error_feedback(err, head, spec, 3, 3)
        assert not fb.data.any()
        assert fb.shape == (1, 2, 3, 3)

    def test_one_hot_error_selects_row(self):
        spec = ConvSpec(1, 1, 2, 1, 0)
        w = np.zeros((2, 4), dtype=np.int64)
        w[1] = [1, 2, 3, 4]
        head = kernel_weights(w)
        err = IntTensor(np.array([[0, 1]]), 32)
        fb = conv_error_feedback(err, head, spec, 2, 2)
        assert fb.data.reshape(-1).tolist() == [1, 2, 3, 4]

    def test_matches_matmul_oracle(self, rng):
        spec = ConvSpec(1, 2, 2, 1, 0)
        n_flat = 2 * 3 * 3
        wv = rng.integers(-20, 20, size=(5, n_flat))
        head = kernel_weights(wv)
        err = rng.integers(-100, 100, size=(3, 5))
        fb = conv_error_feedback(IntTensor(err, 32), head, spec, 3, 3,
                                 OpCounter())
        want = ref.matmul_ref(err.tolist(), wv.tolist())
        assert fb.data.reshape(3, n_flat).tolist() == want

    def test_width_mismatch(self):
        spec = ConvSpec(1, 2, 2, 1, 0)
        head = kernel_weights(np.ones((4, 7), dtype=np.int64))
        with pytest.raises(ShapeError):
            conv_error_feedback(IntTensor(np.zeros((1, 4), dtype=np.int64), 32),
                                head, spec, 3, 3)


class TestRecurrent:
    def test_square_enforced(self):
        with pytest.raises(ShapeError):
            RecurrentWeights(IntTensor(np.zeros((2, 3), dtype=np.int64), 8))

    def test_digest_detects_mutation(self):
        rw = RecurrentWeights(IntTensor(np.arange(4).reshape(2, 2), 8))
        rw.check_unchanged()
        rw.w_rec.data[0, 0] = 99
        with pytest.raises(RuntimeError):
            rw.check_unchanged()

    def test_init_within_lp_range(self, rng):
        rw = init_recurrent(20, 8, rng, global_max=0.3)
        assert rw.w_rec.shape == (20, 20)
        assert np.abs(rw.w_rec.data).max() <= 127

    def test_tap_truncates_to_top_bits(self):
        v = IntTensor(np.array([[1 << 20, -(1 << 20), 5]]), 32)
        tap = voltage_tap(v)
        assert tap.bits == REC_TAP_BITS
        assert tap.data.tolist() == [[16, -16, 0]]

    def test_tap_always_16_bit(self, rng):
        for _ in range(N_PROPERTY):
            bits = int(rng.integers(REC_TAP_BITS, 33))
            lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
            v = IntTensor(rng.integers(lo, hi + 1, size=4), bits)
            tap = voltage_tap(v)
            assert np.abs(tap.data).max() < 1 << 15 or \
                tap.data.min() == -(1 << 15)

    def test_zero_recurrence_equals_plain_step(self, rng):
        for _ in range(N_PROPERTY):
            n_in, n = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            params = LifParams(int(rng.integers(10, 100)), 8,
                               int(rng.integers(0, 3)))
            wv = rng.integers(-60, 60, size=(n, n_in))
            w = kernel_weights(wv)
            rw = RecurrentWeights(IntTensor(np.zeros((n, n), dtype=np.int64), 8))
            a = LifLayerState(2, n_in, n, params)
            b = LifLayerState(2, n_in, n, params)
            v0 = rng.integers(-200, 200, size=(2, n))
            a.v.data[:] = v0
            b.v.data[:] = v0
            s = IntTensor(rng.integers(0, 2, size=(2, n_in)), 2, binary=True)
            spk_a = recurrent_step(a, s, w, rw)
            spk_b = lif_step(b, s, w)
            assert np.array_equal(spk_a.data, spk_b.data)
            assert np.array_equal(a.v.data, b.v.data)

    def test_zero_voltage_zero_contribution(self, rng):
        n = 3
        params = LifParams(64, 32, 1)
        w = kernel_weights(rng.integers(-60, 60, size=(n, n)))
        rw = init_recurrent(n, 8, rng, 0.5)
        a = LifLayerState(1, n, n, params)
        b = LifLayerState(1, n, n, params)
        s = IntTensor(rng.integers(0, 2, size=(1, n)), 2, binary=True)
        spk_a = recurrent_step(a, s, w, rw)
        spk_b = lif_step(b, s, w)
        assert np.array_equal(spk_a.data, spk_b.data)

    def test_rollout_matches_oracle(self, rng):
        for _ in range(200):
            n_in, n = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            v_th = int(rng.integers(10, 120))
            params = LifParams(v_th, max(1, v_th >> 1), int(rng.integers(0, 3)))
            wv = rng.integers(-70, 70, size=(n, n_in))
            rv = rng.integers(-20, 20, size=(n, n))
            w = kernel_weights(wv)
            rw = RecurrentWeights(IntTensor(rv, 8))
            st = LifLayerState(2, n_in, n, params)
            rl = ref.RefLayer(
                w_shadow=wv.tolist(), shadow_bits=8, lp_bits=8,
                v_th=params.v_th, grad_win=params.grad_win,
                beta_shift=params.beta_shift, eta_shift=8, rho_shift=12,
                w_rec=rv.tolist())
            rl.reset(2)
            for _t in range(4):
                s = rng.integers(0, 2, size=(2, n_in))
                st_in = IntTensor(s, 2, binary=True)
                update_pre_trace(st, st_in)
                spikes = recurrent_step(st, st_in, w, rw)
                want = rl.step(s.tolist())
                assert spikes.data.tolist() == want
                assert st.v.data.tolist() == rl.v
