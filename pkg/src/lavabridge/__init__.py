"""Lava Bridge start-state-distribution RL lab."""

from .env import (
    Action,
    Cause,
    EpisodeOverError,
    InvalidResetError,
    LavaBridgeEnv,
    Rect,
    State,
    StepResult,
    Vec2,
    WorldGeometry,
)
from .samplers import (
    DemoStates,
    SamplerConfig,
    SamplerWeights,
    init_weights,
    sample_index,
    update_auxss,
)
from .safety import SafetyEstimate, brute_force_safety, estimate_safety
from .replay import ReplayBuffer, Transition, prefill_demo
from .learner import (
    DivergenceError,
    EpisodeResult,
    LearnerConfig,
    SACLearner,
    jsrl_start_state,
    train_for_one_episode,
)
from .demos import DemoArchive, DemoTrajectory, generate_demos, load_archive, save_archive, subsample_states
from .config import EnvSettings, RunConfig, load_run_config
from .bench import EvalReport, evaluate, run_training, sweep

__version__ = "0.1.0"
