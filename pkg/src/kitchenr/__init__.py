"""Desk-scale mobile-manipulation benchmark engine."""

from .eval import (
    BenchmarkOptions,
    DegenerateMetric,
    EpisodeResult,
    MetricsReport,
    MonitorConfig,
    TaskRecord,
    composite_m,
    composite_p,
    monitor_step,
    mse_trajectory,
    run_benchmark,
)
from .manip import (
    EePose,
    FsmPhase,
    FsmState,
    RmpLeaf,
    cosine_blend,
    fsm_step,
    grasp_check,
    interpolate_pose,
    numeric_jacobian,
    rmp_resolve,
)
from .nav import (
    BlockedEndpoint,
    ControllerParams,
    ControllerState,
    NoPath,
    PathPolyline,
    VelocityCommand,
    controller_step,
    line_of_sight,
    theta_star,
    wrap_angle,
)
from .plan import (
    InstructionRecord,
    InstructionTemplate,
    ParseError,
    Plan,
    PlanStep,
    builtin_templates,
    exact_match,
    exact_match_corpus,
    generate_instructions,
    parse_plan,
)
from .sim import (
    ActionTuple,
    Environment,
    Observation,
    SimState,
    StepResult,
    TaskSpec,
    check_success,
    reset,
    run_task,
    step,
)
from .world import (
    DistributionParams,
    EpisodeConfig,
    GridMap,
    ObjectState,
    Pose2D,
    Scene,
    Zone,
    default_distribution,
    default_scene,
    inflate_grid,
    pregenerate_batch,
    sample_episode_config,
    validate_config,
)

__version__ = "0.1.0"
