"""blankskip: transducer inference and beam-search decoding with factorized
blank thresholding, runtime efficiency metrics, and an on-device energy model."""

from .decoder import (
    DISABLED,
    BeamConfig,
    DecodeResult,
    Hypothesis,
    NBestEntry,
    beam_search,
    beam_search_pipelined,
    prefix_extension_prob,
    threshold_from_logit,
)
from .errors import (
    BlankskipError,
    ContractViolation,
    DataFormatError,
    EmptyInputError,
    InstanceTooLargeError,
    MetricUndefinedError,
)
from .formats import TraceData, read_model, read_trace, write_model, write_trace
from .kernels import (
    LstmLayerWeights,
    LstmState,
    QuantTensor,
    dequantize,
    fc_forward,
    lstm_step,
    quantize_int8,
    sigmoid,
    softmax,
)
from .metrics import FACTORIZED, NONFACTORIZED, RuntimeStats, nbp, rtf
from .model import (
    EncFrame,
    ModelConfig,
    ModelWeights,
    Posterior,
    PredOut,
    encode,
    joiner_blank,
    joiner_nonblank,
    joiner_nonfactorized,
    posterior,
    predict,
    quantize_model,
    start_pred,
    validate_model,
)
from .oracle import exhaustive_decode
from .power import (
    ComponentProfile,
    EnergyBreakdown,
    PowerParams,
    compare_runs,
    estimate_energy,
    place,
)
from .tables import make_posterior_model, one_hot_frames

__version__ = "0.1.0"
