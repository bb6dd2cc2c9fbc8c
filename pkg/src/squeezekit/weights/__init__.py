"""Parameter compression: pruning, quantization, calibration capture,
and the compressed-model container."""

from .calibration import CalibrationSet, calibration_tasks, capture_calibration
from .modelfile import load_compressed_model, materialize_model, save_compressed_model
from .pruning import (
    SEMI_2_4,
    SparsityMask,
    ecoflap_keep_fractions,
    ecoflap_layer_scores,
    ecoflap_prune,
    next_token_loss,
    reconstruction_error,
    semi24_mask,
    sparsegpt_prune,
    sparsegpt_scores,
    unstructured_mask,
    wanda_prune,
    wanda_scores,
    zo_gradient_norm,
)
from .quantization import (
    QuantSpec,
    QuantizedTensor,
    awq_quantize,
    gptq_quantize,
    quant_objective,
    rtn_quantize,
)

__all__ = [
    "CalibrationSet",
    "QuantSpec",
    "QuantizedTensor",
    "SEMI_2_4",
    "SparsityMask",
    "awq_quantize",
    "calibration_tasks",
    "capture_calibration",
    "ecoflap_keep_fractions",
    "ecoflap_layer_scores",
    "ecoflap_prune",
    "gptq_quantize",
    "load_compressed_model",
    "materialize_model",
    "next_token_loss",
    "quant_objective",
    "reconstruction_error",
    "rtn_quantize",
    "save_compressed_model",
    "semi24_mask",
    "sparsegpt_prune",
    "sparsegpt_scores",
    "unstructured_mask",
    "wanda_prune",
    "wanda_scores",
    "zo_gradient_norm",
]
