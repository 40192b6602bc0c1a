from .config import CONTRASTIVE, DOWNSTREAM, PRETRAIN, TrainConfig
from .bundle import PretrainedBundle
from .multitask import (
    TaskSpec,
    TrainingDiverged,
    pretrain_multitask,
    synthetic_tasks,
    task_loss,
    train_mtl_baseline,
)
from .downstream import (
    DescriptorParam,
    DownstreamResult,
    downstream_fit,
    downstream_fit_discrete,
    evaluate,
    evaluate_features,
    features_of,
    fit_head,
    fixed_feature_fit,
    run_downstream_cell,
)
from .contrastive import CONTRASTIVE_CYCLE, pretrain_contrastive
