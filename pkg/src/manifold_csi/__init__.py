"""Landmark-based manifold compression and reconstruction for massive-MIMO CSI.

The package learns paired landmark dictionaries from synthetic channel data,
compresses incoming CSI matrices to low-dimensional embeddings through local
sum-to-one weights, and reconstructs them at the receiver with the mirrored
dictionary pair.
"""

from .channel import (
    ChannelConfig,
    add_estimation_noise,
    assemble_wideband,
    build_dataset,
    complex_unstack,
    draw_cluster_params,
    generate_channel_vector,
    generate_slot,
    real_stack,
    steering_vector,
)
from .codec import (
    CodecBundle,
    CodecStats,
    LandmarkCodec,
    compress,
    compression_ratio,
    fit_codec_bundle,
    reconstruct,
    solve_incremental_weights,
)
from .landmarks import (
    DeadLandmarkError,
    LocalWeights,
    ObjectiveTrace,
    TrainConfig,
    WeightSolveError,
    approximation_error,
    embed_training_set,
    fit_low_dim_dictionary,
    fit_reconstruction_dictionaries,
    knn_landmarks,
    objective_value,
    solve_local_weights,
    train_landmarks,
    update_dictionary_column,
    update_g,
)
from .metrics import EvalReport, NEG_INF_DB, cosine_similarity, nmse, spectral_efficiency
from .quantizer import (
    QuantizerModel,
    UniformQuantizer,
    decode_frame,
    dequantize,
    encode_frame,
    fit_quantizer,
    pack_codes,
    quantize,
    unpack_codes,
)
from .storage import read_matrix, write_matrix

__version__ = "0.1.0"
