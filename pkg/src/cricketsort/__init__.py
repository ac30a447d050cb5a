"""Decision engine, simulator, and analytics for a vision-guided cricket
sex-sorting rig: replay detection logs through the sliding-window arm
controller, evaluate detector quality, simulate crossings under stress
presets, and recompute the experiment metrics."""

from .boxes import (
    DEFAULT_GEOMETRY,
    Detection,
    FrameObservations,
    GroundTruthBox,
    ImageGeometry,
    NormBBox,
    PixelBox,
    SexLabel,
    distance_to_sort_line,
    iou,
    iou_boxes,
    select_target,
    sex_from_name,
    to_pixels,
)
from .controller import (
    ArmCommand,
    ControllerConfig,
    ControllerState,
    FrameVote,
    SortingController,
    majority_command,
    replay_log,
    vote_for_frame,
)
from .evaluation import (
    ConfusionSummary,
    DetectionConfusion,
    EvalReport,
    MatchSet,
    PRPoint,
    average_precision,
    detection_confusion_summary,
    evaluate_detections,
    map_at_50,
    match_detections,
    pr_curve,
)
from .metrics import (
    DEFAULT_ZONE_MM,
    ArrivalEvent,
    ClassMetricsReport,
    GroupStats,
    LabelMetrics,
    SortConfusion,
    SpeedRecord,
    SpeedSummary,
    StepSeries,
    class_metrics,
    cumulative_arrivals,
    sorting_accuracy,
    speed_from_traversal,
    speed_summary,
)
from .simulate import (
    ArmModel,
    CricketAgent,
    Destination,
    DetectorModel,
    PRESETS,
    SimOutcome,
    SimReport,
    StressPreset,
    default_sim_controller_config,
    preset_calibration_report,
    simulate_agents,
    simulate_run,
    spawn_schedule,
    synth_frames,
)

__version__ = "0.1.0"
