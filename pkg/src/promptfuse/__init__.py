"""Few-shot prompt tuning with score-weighted test-time prompt fusion.

A self-contained engine: a frozen toy dual encoder, CoOp-style few-shot
tuning of shared context vectors on base classes, per-input blending of
learned and hand-crafted prompts weighted by match scores, and an
open-class evaluation harness with synthetic tasks, sweeps, and reports.
"""

from .backend import backend_name
from .core import (
    cosine_similarity,
    harmonic_mean,
    l2_normalize,
    softmax_with_temperature,
)
from .encoder import (
    Encoders,
    ImageEncoderParams,
    PromptSequence,
    TextEncoderParams,
    Vocabulary,
    build_handcrafted_prompt,
    build_image_encoder,
    build_text_encoder,
    build_vocabulary,
    encode_image,
    encode_text,
    encode_text_grad,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateInput,
    IoError,
    NumericError,
    PromptFuseError,
    RangeError,
    ShapeError,
    TemplateError,
)
from .fusion import (
    FusionWeight,
    OpenClassPredictor,
    PromptBank,
    build_prompt_bank,
    compute_alpha,
    fuse_prompts,
    predict_classifier_combo,
    predict_fixed_alpha,
    predict_open,
    stage1_scores,
)
from .harness import (
    EvalReport,
    SyntheticTask,
    emit_report,
    evaluate_open,
    generate_synthetic_task,
    read_report,
    run_pipeline,
    run_shot_sweep,
    run_temperature_sweep,
    sample_few_shot,
    split_base_new,
)
from .config import RunSettings, load_config, parse_config
from .scoring import (
    ClassUniverse,
    MCMScore,
    calibrate_lambda,
    class_posterior,
    mcm_score,
    ood_decide,
)
from .tuning import (
    ContextBlock,
    FewShotSet,
    TrainConfig,
    assemble_prompt,
    coop_loss,
    init_context,
    lr_schedule,
    train_coop,
)

__version__ = "0.1.0"
