"""Network assembly: trainable layers, architectures, memory inventory.

Three bodies are supported, each followed by a fully-connected LIF head:
a fully-connected hidden layer, a single stride-s convolution, and a
fully-connected hidden layer with a fixed random recurrence.  Every
trainable layer runs the same per-step order defined in `neuron` and the
same shadow/LP update rule.

Gradients are computed by default through the factored identity

    delta[n,i] = sum_t sum_b (v_fb[b,n] * sg[t,b,n]) * t_pre[t,b,i]

which equals the explicit correlation-trace reduction bit for bit whenever
the trace would not saturate (the config validator enforces widths that
make saturation impossible), while avoiding materializing the
batch x out x in trace.  `trace_mode="explicit"` keeps the materialized
trace instead; both paths charge the canonical trace/gradient prices.
"""

from __future__ import annotations

import numpy as np

from . import convrec, costs, neuron, weights
from .costs import TensorItem, charge_corr_trace_step, charge_gradient_reduce
from .neuron import (LifLayerState, LifParams, integrate_voltage, lif_step,
                     surrogate_grad, update_pre_trace)
from .tensor import IntTensor, exact_matmul

PURPOSE_WEIGHTS = 0
PURPOSE_SHUFFLE = 1
PURPOSE_ENCODE_TRAIN = 2
PURPOSE_ENCODE_TEST = 3


def seeded_rng(base_seed: int, purpose: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((int(base_seed), int(purpose)) + tuple(int(e) for e in extra)))


class FcLifLayer:
    """Fully-connected trainable LIF layer with per-step trace logs."""

    trainable = True

    def __init__(self, w: weights.MixedPrecisionLayerWeights, params: LifParams,
                 n_in: int, n_out: int, v_bits: int, t_pre_bits: int,
                 t_corr_bits: int, explicit_trace: bool = False):
        self.w = w
        self.params = params
        self.n_in = n_in
        self.n_out = n_out
        self.v_bits = v_bits
        self.t_pre_bits = t_pre_bits
        self.t_corr_bits = t_corr_bits
        self.explicit_trace = explicit_trace
        self.state = None

    def begin_sequence(self, batch: int, t_s: int, train: bool = True) -> None:
        self.train = train
        self.state = LifLayerState(
            batch, self.n_in, self.n_out, self.params, self.v_bits,
            self.t_pre_bits, self.t_corr_bits,
            track_corr=train and self.explicit_trace)
        if train:
            # The log must cover the declared trace width; saturation caps
            # values at that width, not at int16.
            log_dt = np.int16 if self.t_pre_bits <= 16 else np.int32
            self.sg_log = np.zeros((t_s, batch, self.n_out), dtype=np.int8)
            self.tpre_log = np.zeros((t_s, batch, self.n_in), dtype=log_dt)
        self.t = 0

    def _drive(self, spikes_in: IntTensor, counter) -> IntTensor:
        return lif_step(self.state, spikes_in, self.w, counter)

    def step(self, spikes_in: IntTensor, counter=None) -> IntTensor:
        if not self.train:
            return self._drive(spikes_in, counter)
        update_pre_trace(self.state, spikes_in, counter)
        spikes = self._drive(spikes_in, counter)
        sg = surrogate_grad(self.state.v_pre_reset, self.params)
        if self.explicit_trace:
            neuron.update_corr_trace(self.state, sg, counter)
        elif counter is not None:
            charge_corr_trace_step(counter, self.state.batch, self.n_out,
                                   self.n_in, int(np.count_nonzero(sg.data)))
        self.sg_log[self.t] = sg.data
        self.tpre_log[self.t] = self.state.t_pre.data
        self.t += 1
        return spikes

    def gradient(self, v_fb: np.ndarray, counter=None) -> np.ndarray:
        """Weight-shaped gradient from the feedback voltage; exact, wide."""
        if counter is not None:
            charge_gradient_reduce(
                counter, self.state.batch * self.n_out * self.n_in)
        if self.explicit_trace:
            return np.einsum("bn,bni->ni", v_fb, self.state.t_corr.data)
        t_used = self.t
        gated = v_fb[None, :, :] * self.sg_log[:t_used]       # [T, B, N]
        g = gated.transpose(2, 0, 1).reshape(self.n_out, -1)  # [N, T*B]
        p = self.tpre_log[:t_used].astype(np.int64).reshape(-1, self.n_in)
        return exact_matmul(g, p)

    def update(self, delta: np.ndarray, counter=None) -> None:
        clipped = weights.clip_gradient(
            IntTensor(np.asarray(delta), 32, validate=False), self.w.clip)
        weights.apply_update(self.w, clipped, counter)


class RecurrentFcLayer(FcLifLayer):
    """FC layer plus a fixed random recurrence on the truncated voltage."""

    def __init__(self, *args, w_rec: convrec.RecurrentWeights, **kwargs):
        super().__init__(*args, **kwargs)
        self.w_rec = w_rec

    def _drive(self, spikes_in: IntTensor, counter) -> IntTensor:
        return convrec.recurrent_step(self.state, spikes_in, self.w,
                                      self.w_rec, counter)


class ConvLifLayer:
    """Single convolutional trainable LIF layer on spatial spike maps.

    Inputs and outputs cross the layer boundary flattened; the spatial
    geometry lives here.  The flat presynaptic trace is a reshaped view of
    the spatial one, so the FC trace update applies unchanged.
    """

    trainable = True

    def __init__(self, w: weights.MixedPrecisionLayerWeights, params: LifParams,
                 spec: convrec.ConvSpec, in_hw: tuple[int, int], v_bits: int,
                 t_pre_bits: int, t_corr_bits: int,
                 explicit_trace: bool = False):
        self.w = w
        self.params = params
        self.spec = spec
        self.in_hw = in_hw
        self.oh, self.ow = spec.out_hw(*in_hw)
        self.n_in = spec.in_channels * in_hw[0] * in_hw[1]
        self.n_out = spec.out_channels * self.oh * self.ow
        self.v_bits = v_bits
        self.t_pre_bits = t_pre_bits
        self.t_corr_bits = t_corr_bits
        self.explicit_trace = explicit_trace
        self.state = None

    def _spatial(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(flat.shape[0], self.spec.in_channels, *self.in_hw)

    def begin_sequence(self, batch: int, t_s: int, train: bool = True) -> None:
        self.train = train
        self.state = LifLayerState(
            batch, self.n_in, self.n_out, self.params, self.v_bits,
            self.t_pre_bits, self.t_corr_bits, track_corr=False)
        if train and self.explicit_trace:
            self.trace = convrec.ConvCorrTrace.zeros(
                batch, self.spec, self.oh, self.ow, self.t_corr_bits)
        if train:
            log_dt = np.int16 if self.t_pre_bits <= 16 else np.int32
            self.sg_log = np.zeros((t_s, batch, self.n_out), dtype=np.int8)
            self.tpre_log = np.zeros((t_s, batch, self.n_in), dtype=log_dt)
        self.t = 0

    def _forward_current(self, spikes_in: IntTensor, counter) -> np.ndarray:
        spatial = IntTensor(self._spatial(spikes_in.data), spikes_in.bits,
                            spikes_in.binary, validate=False)
        maps = convrec.conv_forward(spatial, self.w, self.spec, counter)
        return maps.data.reshape(spikes_in.shape[0], self.n_out)

    def step(self, spikes_in: IntTensor, counter=None) -> IntTensor:
        if not self.train:
            return integrate_voltage(
                self.state, self._forward_current(spikes_in, counter), counter)
        update_pre_trace(self.state, spikes_in, counter)
        spikes = integrate_voltage(
            self.state, self._forward_current(spikes_in, counter), counter)
        sg = surrogate_grad(self.state.v_pre_reset, self.params)
        batch = spikes_in.shape[0]
        if self.explicit_trace:
            sg_map = IntTensor(
                sg.data.reshape(batch, self.spec.out_channels, self.oh, self.ow),
                2, binary=True, validate=False)
            tpre_spatial = IntTensor(self._spatial(self.state.t_pre.data),
                                     self.t_pre_bits, validate=False)
            convrec.conv_corr_update(self.trace, tpre_spatial, sg_map,
                                     self.spec, counter)
        elif counter is not None:
            charge_corr_trace_step(counter, batch * self.oh * self.ow,
                                   self.spec.out_channels, self.spec.patch_len,
                                   int(np.count_nonzero(sg.data)))
        self.sg_log[self.t] = sg.data
        self.tpre_log[self.t] = self.state.t_pre.data
        self.t += 1
        return spikes

    def gradient(self, v_fb: np.ndarray, counter=None) -> np.ndarray:
        """Kernel-shaped gradient; feedback is summed over batch and space."""
        batch = v_fb.shape[0]
        spec = self.spec
        if counter is not None:
            charge_gradient_reduce(
                counter, batch * self.n_out * spec.patch_len)
        if self.explicit_trace:
            fb_map = v_fb.reshape(batch, spec.out_channels, self.oh, self.ow)
            flat = np.einsum("bcyx,bcyxp->cp", fb_map,
                             self.trace.data.data.reshape(
                                 batch, spec.out_channels, self.oh, self.ow,
                                 spec.patch_len))
            return flat.reshape(spec.out_channels, spec.in_channels,
                                spec.kernel, spec.kernel)
        t_used = self.t
        gated = v_fb[None, :, :] * self.sg_log[:t_used]  # [T, B, Co*OH*OW]
        g = gated.reshape(t_used, batch, spec.out_channels, self.oh * self.ow)
        g = g.transpose(2, 0, 1, 3).reshape(spec.out_channels, -1)
        patches = np.empty((t_used, batch, self.oh * self.ow, spec.patch_len),
                           dtype=np.int64)
        for t in range(t_used):
            tp = IntTensor(self._spatial(self.tpre_log[t].astype(np.int64)),
                           self.t_pre_bits, validate=False)
            patches[t] = convrec.unfold(tp, spec).data.reshape(
                batch, self.oh * self.ow, spec.patch_len)
        p = patches.reshape(-1, spec.patch_len)
        flat = exact_matmul(g, p)
        return flat.reshape(spec.out_channels, spec.in_channels, spec.kernel,
                            spec.kernel)

    def update(self, delta: np.ndarray, counter=None) -> None:
        clipped = weights.clip_gradient(
            IntTensor(np.asarray(delta), 32, validate=False), self.w.clip)
        weights.apply_update(self.w, clipped, counter)


class Network:
    """A trainable body plus a fully-connected LIF head."""

    def __init__(self, body, head: FcLifLayer, arch: str, n_inputs: int,
                 classes: int, input_binary: bool, input_bits: int):
        self.body = body
        self.head = head
        self.arch = arch
        self.n_inputs = n_inputs
        self.classes = classes
        self.input_binary = input_binary
        self.input_bits = input_bits

    @property
    def layers(self):
        return (self.body, self.head)

    def begin_sequence(self, batch: int, t_s: int, train: bool = True) -> None:
        self.body.begin_sequence(batch, t_s, train)
        self.head.begin_sequence(batch, t_s, train)

    def step(self, spikes_in: IntTensor, counter=None) -> IntTensor:
        hidden = self.body.step(spikes_in, counter)
        return self.head.step(hidden, counter)

    def weight_layers(self):
        return [self.body.w, self.head.w]

    def check_fixed_weights(self) -> None:
        if isinstance(self.body, RecurrentFcLayer):
            self.body.w_rec.check_unchanged()


def build_network(cfg, seed: int) -> Network:
    """Construct and initialize a network for one training seed.

    Real-valued inits for every trainable layer are drawn first so the
    quantizer can normalize against the single global maximum, then each
    layer is quantized and the reals are dropped.
    """
    m = cfg.model
    explicit = cfg.trace_mode == "explicit"
    if cfg.arch == "conv":
        spec = convrec.ConvSpec(m.in_channels, m.out_channels, m.kernel,
                                m.stride, m.padding)
        body_shape = (m.out_channels, m.in_channels, m.kernel, m.kernel)
        body_fan_in = spec.patch_len
        oh, ow = spec.out_hw(*m.in_hw)
        hidden_dim = m.out_channels * oh * ow
    else:
        spec = None
        body_shape = (m.hidden, m.inputs)
        body_fan_in = m.inputs
        hidden_dim = m.hidden
    head_shape = (m.classes, hidden_dim)

    r_body = seeded_rng(seed, PURPOSE_WEIGHTS, 0)
    r_head = seeded_rng(seed, PURPOSE_WEIGHTS, 1)
    reals_body = weights.real_init(body_shape, body_fan_in, r_body)
    reals_head = weights.real_init(head_shape, hidden_dim, r_head)
    global_max = max(float(np.abs(reals_body).max()),
                     float(np.abs(reals_head).max()))

    h1, h2 = cfg.layer1, cfg.layer2
    w_body = weights.init_weights(
        body_shape, body_fan_in, m.shadow_bits, m.lp_bits, None, global_max,
        h1.eta_shift, h1.rho_shift, cfg.delta_max, reals=reals_body)
    w_head = weights.init_weights(
        head_shape, hidden_dim, m.shadow_bits, m.lp_bits, None, global_max,
        h2.eta_shift, h2.rho_shift, cfg.delta_max, reals=reals_head)
    p1 = LifParams(h1.v_th, h1.grad_win, neuron.decay_shift(h1.beta))
    p2 = LifParams(h2.v_th, h2.grad_win, neuron.decay_shift(h2.beta))

    if cfg.arch == "fc":
        body = FcLifLayer(w_body, p1, m.inputs, m.hidden, m.v_bits,
                          m.t_pre_bits, m.t_corr_bits, explicit)
    elif cfg.arch == "conv":
        body = ConvLifLayer(w_body, p1, spec, m.in_hw, m.v_bits,
                            m.t_pre_bits, m.t_corr_bits, explicit)
    elif cfg.arch == "recurrent":
        w_rec = convrec.init_recurrent(
            m.hidden, m.lp_bits, seeded_rng(seed, PURPOSE_WEIGHTS, 2),
            global_max)
        body = RecurrentFcLayer(w_body, p1, m.inputs, m.hidden, m.v_bits,
                                m.t_pre_bits, m.t_corr_bits, explicit,
                                w_rec=w_rec)
    else:
        raise ValueError(f"unknown architecture {cfg.arch!r}")
    head = FcLifLayer(w_head, p2, hidden_dim, m.classes, m.v_bits,
                      m.t_pre_bits, m.t_corr_bits, explicit)
    return Network(body, head, cfg.arch, m.inputs, m.classes,
                   input_binary=m.input_max == 1, input_bits=m.input_bits)


GRAD_PRODUCT_NAME = "grad_product"


def memory_inventory(cfg) -> tuple[TensorItem, ...]:
    """Tensor-by-tensor memory inventory of one training iteration.

    Static items persist across iterations (both weight views plus scalar
    parameters); dynamic items are the per-batch working set of the
    canonical explicit-trace algorithm, including the feedback x trace
    product at LP width that the gradient reduction consumes.
    """
    m = cfg.model
    b = cfg.batch_size
    if cfg.arch == "conv":
        spec = convrec.ConvSpec(m.in_channels, m.out_channels, m.kernel,
                                m.stride, m.padding)
        oh, ow = spec.out_hw(*m.in_hw)
        hidden = m.out_channels * oh * ow
        body_weights = m.out_channels * spec.patch_len
        body_trace = b * hidden * spec.patch_len
    else:
        hidden = m.hidden
        body_weights = m.hidden * m.inputs
        body_trace = b * hidden * m.inputs
    head_weights = m.classes * hidden
    head_trace = b * m.classes * hidden

    items = [
        TensorItem("body_shadow", body_weights, m.shadow_bits, "static"),
        TensorItem("body_lp", body_weights, m.lp_bits, "static"),
        TensorItem("head_shadow", head_weights, m.shadow_bits, "static"),
        TensorItem("head_lp", head_weights, m.lp_bits, "static"),
    ]
    if cfg.arch == "recurrent":
        items.append(TensorItem("recurrent_fixed", hidden * hidden,
                                m.lp_bits, "static"))
    # Scalar parameters, priced at their natural widths.
    for layer in ("layer1", "layer2"):
        items.append(TensorItem(f"{layer}_v_th", 1, 16, "static"))
        items.append(TensorItem(f"{layer}_grad_win", 1, 16, "static"))
        items.append(TensorItem(f"{layer}_eta_shift", 1, 8, "static"))
        items.append(TensorItem(f"{layer}_rho_shift", 1, 8, "static"))
        items.append(TensorItem(f"{layer}_beta_shift", 1, 8, "static"))
    items.append(TensorItem("alpha", 1, 16, "static"))
    items.append(TensorItem("ts_shift", 1, 8, "static"))
    items.append(TensorItem("delta_max", 1, 16, "static"))

    items += [
        TensorItem("input_sequence", cfg.t_s * b * m.inputs, m.input_bits,
                   "dynamic"),
        TensorItem("body_v", b * hidden, m.v_bits, "dynamic"),
        TensorItem("head_v", b * m.classes, m.v_bits, "dynamic"),
        TensorItem("body_t_pre", b * m.inputs, m.t_pre_bits, "dynamic"),
        TensorItem("head_t_pre", b * hidden, m.t_pre_bits, "dynamic"),
        TensorItem("spikes", b * (hidden + m.classes), 1, "dynamic"),
        TensorItem("surrogate", b * (hidden + m.classes), 1, "dynamic"),
        TensorItem("body_t_corr", body_trace, m.t_corr_bits, "dynamic"),
        TensorItem("head_t_corr", head_trace, m.t_corr_bits, "dynamic"),
        TensorItem(GRAD_PRODUCT_NAME, body_trace + head_trace, m.lp_bits,
                   "dynamic"),
        TensorItem("pred_counts", b * m.classes, 32, "dynamic"),
        TensorItem("labels_onehot", b * m.classes, 1, "dynamic"),
        TensorItem("error", b * m.classes, 32, "dynamic"),
        TensorItem("feedback_v", b * hidden, 32, "dynamic"),
        TensorItem("body_delta", body_weights, 32, "dynamic"),
        TensorItem("head_delta", head_weights, 32, "dynamic"),
    ]
    return tuple(items)


def memory_report(cfg, fp32: bool = False) -> costs.MemoryReport:
    """Price the iteration inventory at declared widths, or as 32-bit floats."""
    items = memory_inventory(cfg)
    if fp32:
        items = costs.reprice_fp32(items)
    return costs.summarize(items)
