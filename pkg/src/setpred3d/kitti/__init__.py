"""KITTI-format ingestion, AP evaluation and the noise-robustness harness."""
from .ap import (DEFAULT_THRESHOLDS, APResult, Difficulty, NoGroundTruthWarning, ap_11, difficulty_of,
                 evaluate, interpolated_ap, match_frame, pr_curve)
from .io import (Calibration, DetectionFrame, DetectionResult, KittiFormatError, KittiLabel, box_to_label,
                 format_label_line, format_pointcloud_bin, label_to_box, load_dataset, parse_calib_file,
                 parse_detection_file, parse_label_file, parse_pointcloud_bin, write_dataset)
from .noise import DEFAULT_MARGIN, DEFAULT_NOISE_LEVELS, inject_noise, sample_in_box
from .synthetic import CAR_SIZE, make_frames
from .suite import (EvalReport, RobustnessRun, eval_suite, make_recenter_detector, passthrough,
                    points_in_box, robustness_table, run_robustness)
