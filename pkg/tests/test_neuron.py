"""LIF voltage dynamics, surrogate window, and the two eligibility traces."""

import numpy as np
import pytest

from intspike import (IntTensor, LifLayerState, LifParams, OpCounter,
                      ShapeError, decay_shift, lif_step, surrogate_grad,
                      update_corr_trace, update_pre_trace)
from intspike.weights import MixedPrecisionLayerWeights, requantize

import exact_reference as ref
from conftest import N_PROPERTY


def fc_weights(vals, shadow_bits=16, lp_bits=8):
    arr = np.asarray(vals)
    w = MixedPrecisionLayerWeights(
        shadow=IntTensor(arr, shadow_bits),
        lp=IntTensor(np.zeros(arr.shape, dtype=np.int64), lp_bits),
        eta_shift=8, decay_shift=12, clip=1 << 10)
    requantize(w)
    return w


PARAMS = LifParams(v_th=64, grad_win=32, beta_shift=1)


class TestDecayShift:
    def test_powers_of_two(self):
        assert decay_shift(0.5) == 1
        assert decay_shift(0.25) == 2
        assert decay_shift(1.0) == 0

    def test_non_power(self):
        assert decay_shift(0.3) == 1  # floor(log2(10/3))

    def test_range_enforced(self):
        for beta in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                decay_shift(beta)

    def test_matches_log_identity(self, rng):
        for _ in range(N_PROPERTY):
            beta = float(rng.uniform(1e-6, 1.0))
            k = decay_shift(beta)
            assert 2.0 ** (-k - 1) < beta <= 2.0 ** (-k) or beta == 2.0 ** (-k)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            LifParams(v_th=0, grad_win=1, beta_shift=1)
        with pytest.raises(ValueError):
            LifParams(v_th=1, grad_win=0, beta_shift=1)
        with pytest.raises(ValueError):
            LifParams(v_th=1, grad_win=1, beta_shift=32)

    def test_reset_zeroes_state(self):
        st = LifLayerState(2, 3, 4, PARAMS)
        st.v.data[:] = 7
        st.t_pre.data[:] = 7
        st.t_corr.data[:] = 7
        st.reset_state()
        assert not st.v.data.any()
        assert not st.t_pre.data.any()
        assert not st.t_corr.data.any()


class TestPreTrace:
    def test_decay_plus_spike(self):
        st = LifLayerState(1, 1, 1, LifParams(64, 32, 2))
        st.t_pre.data[:] = 4
        update_pre_trace(st, IntTensor(np.array([[1]]), 2, binary=True))
        assert st.t_pre.data.tolist() == [[2]]  # (4 >> 2) + 1

    def test_zero_fixed_point(self):
        st = LifLayerState(1, 2, 1, PARAMS)
        update_pre_trace(st, IntTensor(np.zeros((1, 2), dtype=np.int64), 2,
                                       binary=True))
        assert not st.t_pre.data.any()

    def test_decays_to_zero_and_stays(self):
        st = LifLayerState(1, 1, 1, PARAMS)
        st.t_pre.data[:] = 1
        zero = IntTensor(np.zeros((1, 1), dtype=np.int64), 2, binary=True)
        update_pre_trace(st, zero)
        assert st.t_pre.data.tolist() == [[0]]
        update_pre_trace(st, zero)
        assert st.t_pre.data.tolist() == [[0]]

    def test_shape_mismatch(self):
        st = LifLayerState(1, 3, 1, PARAMS)
        with pytest.raises(ShapeError):
            update_pre_trace(st, IntTensor(np.zeros((1, 2), dtype=np.int64),
                                           2, binary=True))

    def test_nonnegative_forever(self, rng):
        # Inputs are non-negative, decay preserves sign, so t_pre >= 0.
        st = LifLayerState(2, 4, 1, PARAMS)
        for _ in range(100):
            s = IntTensor(rng.integers(0, 2, size=(2, 4)), 2, binary=True)
            update_pre_trace(st, s)
            assert (st.t_pre.data >= 0).all()


class TestVoltageStep:
    def test_subthreshold(self):
        # v=8, decay shift 1, current 3, v_th=100: v -> 7, no spike.
        st = LifLayerState(1, 1, 1, LifParams(100, 50, 1))
        st.v.data[:] = 8
        w = fc_weights([[3]], shadow_bits=8, lp_bits=8)
        spikes = lif_step(st, IntTensor(np.array([[1]]), 2, binary=True), w)
        assert st.v.data.tolist() == [[7]]
        assert spikes.data.tolist() == [[0]]

    def test_boundary_fire_and_reset(self):
        st = LifLayerState(1, 1, 1, LifParams(64, 32, 1))
        w = fc_weights([[64]], shadow_bits=8, lp_bits=8)
        spikes = lif_step(st, IntTensor(np.array([[1]]), 2, binary=True), w)
        assert spikes.data.tolist() == [[1]]
        assert st.v.data.tolist() == [[0]]
        assert st.v_pre_reset.data.tolist() == [[64]]

    def test_spikes_are_binary(self, rng):
        st = LifLayerState(4, 8, 6, PARAMS)
        w = fc_weights(rng.integers(-100, 100, size=(6, 8)))
        for _ in range(20):
            s = IntTensor(rng.integers(0, 2, size=(4, 8)), 2, binary=True)
            spikes = lif_step(st, s, w)
            assert set(np.unique(spikes.data)) <= {0, 1}
            assert spikes.binary

    def test_zero_input_magnitude_decay(self, rng):
        # With no drive, |v| never grows.  Non-negative voltages reach 0
        # within v_bits steps; negative ones converge to the shift fixed
        # point -1 (arithmetic shift floors toward -inf, so -1 >> k = -1).
        for _ in range(200):
            beta_shift = int(rng.integers(1, 8))
            p = LifParams(1 << 20, 1, beta_shift)
            st = LifLayerState(1, 1, 1, p)
            v0 = int(rng.integers(-(1 << 30), 1 << 30))
            st.v.data[:] = v0
            w = fc_weights([[0]], shadow_bits=8, lp_bits=8)
            zero = IntTensor(np.zeros((1, 1), dtype=np.int64), 2, binary=True)
            prev = abs(v0)
            for _step in range(40):
                lif_step(st, zero, w)
                cur = abs(int(st.v.data[0, 0]))
                assert cur <= prev
                prev = cur
            if v0 >= 0:
                assert cur == 0
            else:
                assert int(st.v.data[0, 0]) in (-1, 0)

    def test_shape_mismatch(self):
        st = LifLayerState(1, 3, 2, PARAMS)
        w = fc_weights(np.zeros((4, 2), dtype=np.int64))
        with pytest.raises(ShapeError):
            lif_step(st, IntTensor(np.zeros((1, 3), dtype=np.int64), 2,
                                   binary=True), w)


class TestSurrogate:
    def test_inside_window(self):
        p = LifParams(96, 8, 1)
        v = IntTensor(np.array([[100]]), 32)
        assert surrogate_grad(v, p).data.tolist() == [[1]]

    def test_far_below(self):
        p = LifParams(96, 8, 1)
        v = IntTensor(np.array([[0]]), 32)
        assert surrogate_grad(v, p).data.tolist() == [[0]]

    def test_boundary_excluded(self):
        p = LifParams(96, 8, 1)
        v = IntTensor(np.array([[96 - 8, 96 + 8, 96 - 7, 96 + 7]]), 32)
        assert surrogate_grad(v, p).data.tolist() == [[0, 0, 1, 1]]

    def test_always_binary(self, rng):
        for _ in range(N_PROPERTY):
            p = LifParams(int(rng.integers(1, 1000)),
                          int(rng.integers(1, 500)), 1)
            v = IntTensor(rng.integers(-(1 << 20), 1 << 20, size=6), 32)
            out = surrogate_grad(v, p)
            assert set(np.unique(out.data)) <= {0, 1}
            assert out.bits == 2 and out.binary


class TestCorrTrace:
    def test_zero_gate_no_change(self):
        st = LifLayerState(1, 2, 2, PARAMS)
        st.t_pre.data[:] = [[2, 3]]
        st.t_corr.data[:] = 5
        update_corr_trace(st, IntTensor(np.zeros((1, 2), dtype=np.int64),
                                        2, binary=True))
        assert (st.t_corr.data == 5).all()

    def test_outer_product_by_hand(self):
        st = LifLayerState(1, 2, 2, PARAMS)
        st.t_pre.data[:] = [[2, 3]]
        update_corr_trace(st, IntTensor(np.array([[1, 0]]), 2, binary=True))
        assert st.t_corr.data[0].tolist() == [[2, 3], [0, 0]]

    def test_monotone_nondecreasing(self, rng):
        st = LifLayerState(2, 3, 4, PARAMS)
        w = fc_weights(rng.integers(-30, 30, size=(4, 3)))
        prev = st.t_corr.data.copy()
        for _ in range(50):
            s = IntTensor(rng.integers(0, 2, size=(2, 3)), 2, binary=True)
            update_pre_trace(st, s)
            lif_step(st, s, w)
            sg = surrogate_grad(st.v_pre_reset, st.params)
            update_corr_trace(st, sg)
            assert (st.t_corr.data >= prev).all()
            prev = st.t_corr.data.copy()

    def test_track_corr_false_raises(self):
        st = LifLayerState(1, 2, 2, PARAMS, track_corr=False)
        with pytest.raises(ValueError):
            update_corr_trace(st, IntTensor(np.zeros((1, 2), dtype=np.int64),
                                            2, binary=True))

    def test_shape_mismatch(self):
        st = LifLayerState(1, 2, 3, PARAMS)
        with pytest.raises(ShapeError):
            update_corr_trace(st, IntTensor(np.zeros((1, 2), dtype=np.int64),
                                            2, binary=True))


def random_layer(rng, batch, n_in, n_out):
    v_th = int(rng.integers(8, 200))
    params = LifParams(v_th, max(1, v_th >> 1), int(rng.integers(0, 4)))
    shadow_bits = int(rng.integers(6, 17))
    lp_bits = int(rng.integers(4, shadow_bits + 1))
    lo, hi = -(1 << (shadow_bits - 1)), (1 << (shadow_bits - 1)) - 1
    shadow = rng.integers(lo, hi + 1, size=(n_out, n_in))
    w = fc_weights(shadow, shadow_bits, lp_bits)
    st = LifLayerState(batch, n_in, n_out, params)
    rl = ref.RefLayer(
        w_shadow=[[int(x) for x in row] for row in shadow],
        shadow_bits=shadow_bits, lp_bits=lp_bits, v_th=params.v_th,
        grad_win=params.grad_win, beta_shift=params.beta_shift,
        eta_shift=8, rho_shift=12)
    rl.reset(batch)
    return st, w, rl


class TestFullStepOracle:
    def test_rollouts_match_reference(self, rng):
        # Bit-exact agreement with the arbitrary-precision reference over
        # full multi-step rollouts, including both traces.
        for _ in range(N_PROPERTY):
            batch = int(rng.integers(1, 4))
            n_in = int(rng.integers(1, 6))
            n_out = int(rng.integers(1, 6))
            st, w, rl = random_layer(rng, batch, n_in, n_out)
            for _t in range(int(rng.integers(1, 5))):
                s = rng.integers(0, 2, size=(batch, n_in))
                st_in = IntTensor(s, 2, binary=True)
                update_pre_trace(st, st_in)
                spikes = lif_step(st, st_in, w)
                sg = surrogate_grad(st.v_pre_reset, st.params)
                update_corr_trace(st, sg)
                r_spk = rl.step([[int(x) for x in row] for row in s])
                assert spikes.data.tolist() == r_spk
                assert sg.data.tolist() == rl.sg_hist[-1]
                assert st.v.data.tolist() == rl.v
                assert st.t_pre.data.tolist() == rl.t_pre
                assert st.t_corr.data.tolist() == rl.t_corr
