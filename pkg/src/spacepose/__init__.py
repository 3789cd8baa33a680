"""Geometric core and CLI for spacecraft 6-DoF pose estimation.

Library layout, one module per subsystem:

* :mod:`spacepose.geometry` -- pose/quaternion/camera types, projection, lifting
* :mod:`spacepose.heatmap` -- heatmap rendering and decoding, HMAP1 files
* :mod:`spacepose.pnp` -- EPnP, Gauss-Newton refinement, RANSAC
* :mod:`spacepose.alignment` -- closed-form rigid alignment
* :mod:`spacepose.losses` -- the 3D-guided loss combination with gradients
* :mod:`spacepose.metrics` -- pose scoring with precision floors
* :mod:`spacepose.adaptation` -- pseudo-labelling self-training loop
* :mod:`spacepose.dataio` -- file formats and synthetic data
* :mod:`spacepose.gradcheck` -- finite-difference gradient audit
* :mod:`spacepose.cli` -- command-line entry point
"""

from .alignment import RigidTransform, alignment_residual, umeyama_align
from .adaptation import (
    AcceptanceRecord,
    FilterConfig,
    LoopConfig,
    OraclePredictor,
    Predictor,
    PseudoLabel,
    PseudoLabelStore,
    build_pseudo_test_set,
    filter_keypoints,
    generate_pseudo_label,
    run_adaptation_loop,
)
from .geometry import (
    CameraIntrinsics,
    KeypointModel,
    Pose,
    Quaternion,
    camera_depths,
    lift,
    matrix_to_quat,
    pose_inverse,
    project,
    quat_to_matrix,
    random_quaternion,
)
from .heatmap import (
    HeadOutput,
    Heatmap,
    HeatmapConfig,
    hard_argmax,
    normalize_beta,
    read_hmap,
    render_gaussian,
    response_score,
    sample_depth,
    soft_argmax,
    soft_argmax_with_grad,
    write_hmap,
)
from .losses import LossReport, LossWeights, combined_loss, heatmap_loss, pnp_loss, structure_loss
from .metrics import ScoreReport, s_ori, s_pos, score_dataset
from .pnp import PnPResult, RansacConfig, epnp, ransac_epnp, reprojection_error

__version__ = "0.1.0"
