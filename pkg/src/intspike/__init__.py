"""Integer-only online training for spiking neural networks.

Mixed-precision integer weights (wide shadow + narrow inference pair),
leaky integrate-and-fire dynamics built on arithmetic shifts, and local
eligibility-trace learning driven by a shifted integer loss.  No floats
touch the training path; every operation is counted and the memory
footprint of a configuration is priced analytically.
"""

from .config import (ConfigError, ExperimentConfig, LayerHyper, ModelConfig,
                     load_config, parse_config, to_text)
from .convrec import (ConvCorrTrace, ConvSpec, RecurrentWeights, conv_corr_update,
                      conv_error_feedback, conv_forward, init_recurrent,
                      recurrent_step, unfold, voltage_tap)
from .costs import (KINDS, MemoryReport, OpCounter, TensorItem,
                    charge_corr_trace_step, charge_gradient_reduce,
                    reprice_fp32, summarize, tensor_bytes)
from .data import (EventSample, MnistData, ShdData, ToyData, frame_and_group,
                   load_mnist, load_shd_binary, open_dataset, rate_encode)
from .learner import (BatchResult, PredictionState, batch_gradient, classify,
                      compute_error, evaluate, hidden_feedback, run_training,
                      train_batch)
from .network import (ConvLifLayer, FcLifLayer, Network, RecurrentFcLayer,
                      build_network, memory_inventory, memory_report,
                      seeded_rng)
from .neuron import (LifLayerState, LifParams, decay_shift, lif_step,
                     surrogate_grad, update_corr_trace, update_pre_trace)
from .tensor import (IntTensor, ShapeError, WidthError, exact_matmul,
                     int_bounds, matmul_counted, saturate, shift_right_arith)
from .weights import (MixedPrecisionLayerWeights, apply_update, clip_gradient,
                      init_weights, load_checkpoint, requantize,
                      save_checkpoint)

__version__ = "0.1.0"
