"""Geometry, matching, loss and evaluation kernels for sparse set-prediction 3D detection."""
from .box_codec import Residual7, decode, encode, init_proposals
from .geom3d import (KITTI_EXTENT, BevBox, Box3D, DomainError, Extent, MCEstimate, axis_align,
                     bev_iou_axis_aligned, bev_iou_rotated, bev_iou_rotated_batch, diou_3d, iou_3d_rotated,
                     iou_3d_rotated_batch, mc_iou_oracle, to_bev)
from .loss_engine import (LossBreakdown, StageOutput, batch_loss, frame_loss, l1_grad, matched_pair_loss,
                          stacked_loss)
from .set_matcher import (Assignment, GroundTruth, MatchWeights, Prediction, focal_cls_cost, hungarian,
                          l1_box_cost, match, match_cost_matrix, sin_error)
from .voxel_grid import VoxelGridSpec, VoxelMap, assign_points, grid_dims, mean_encode

__version__ = "0.1.0"
