"""Online LSTM multi-target filter with tracklet data association."""
from rnnfilter.association import AssociationOutcome, ResidualGrid, associate, build_grid
from rnnfilter.lstm import (
    AdamState,
    ConfigError,
    DivergenceError,
    LstmParams,
    LstmState,
    ShapeError,
    TrainConfig,
    TrainingSkipped,
    backend,
    forward_sequence,
    forward_step,
    loss_and_gradient,
    train_online,
    use_backend,
)
from rnnfilter.ospa import OspaConfig, OspaResult, hungarian, ospa
from rnnfilter.pipeline import FilterState, RunResult, run, step
from rnnfilter.scenario import ClutterModel, Scenario, SensorModel, TargetScript, measure, to_cartesian
from rnnfilter.tracklets import AssociationConfig, Tracklet

__version__ = "0.1.0"
