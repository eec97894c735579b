"""Unfolded sparse-coding networks with learned linear group actions on filters."""

from .tensor import Tensor, cross_entropy, frobenius_norm, gradient_of, \
    no_grad, parameter, soft_threshold, stack
from .conv import avg_pool_to, conv2d_adjoint, conv2d_same
from .svd import jacobi_svd, singular_values
from .optim import Adam, lr_at
from .gradcheck import check_gradients, numerical_gradient, relative_error
from .groups import FilterOrbit, GroupAction, apply_action, expand_orbit, \
    invertibility_loss, linear_map_to_matrix, order_defect, \
    svd_invertibility_loss, vec, vec_inv
from .network import BatchNorm2d, GroupConvLayer, UnfoldedNetwork, \
    ista_step_residual_form, task_loss, training_loss
from .config import RunConfig, load_config
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
