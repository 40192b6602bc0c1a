from .tensor import Tensor, as_tensor, backward, concat, stack, relu, sigmoid, zero_grad, clip
from .ops import (
    RunningStats,
    batch_cosine_similarity,
    batchnorm2d,
    conv2d,
    conv_output_size,
    cosine_similarity,
    flatten,
    im2col,
    linear,
    nt_xent_loss,
    softmax_cross_entropy,
)
from .optim import AdamState, LrSchedule, NonFiniteGradient, adam_step, clip_grad_norm, schedule_lr
from .checkpoint import CheckpointError, arrays_digest, checkpoint_digest, load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numerical_grad, relative_error
