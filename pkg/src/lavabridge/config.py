"""Flat ``key = value`` run configuration.

One text file configures everything, keys namespaced as ``env.*``,
``sampler.*``, ``learner.*`` and ``run.*``; ``#`` starts a comment. Values
are scalars, comma-separated tuples, or semicolon-separated groups of
tuples, e.g.::

    run.method = auxss
    run.t_max = 150000
    env.lava = 4,0,6,4.5 ; 4,5.5,6,10
    sampler.delta = 0.05

Unknown keys are rejected to catch typos early.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .env import LavaBridgeEnv, Rect, Vec2, WorldGeometry
from .learner import LearnerConfig
from .samplers import SamplerConfig

__all__ = [
    "EnvSettings",
    "RunConfig",
    "METHODS",
    "parse_kv_text",
    "load_run_config",
    "config_from_mapping",
]

METHODS = ("auxss", "uniform", "goaldist", "omega", "sac", "hysac", "hysac-auxss", "jsrl")

# Methods that reset to demo states through a weighted sampler.
SAMPLER_METHODS = {"auxss": "auxss", "uniform": "uniform", "goaldist": "goaldist",
                   "omega": "omega", "hysac-auxss": "auxss"}
# Methods that need a demo archive at all.
DEMO_METHODS = ("auxss", "uniform", "goaldist", "omega", "hysac", "hysac-auxss", "jsrl")
PREFILL_METHODS = ("hysac", "hysac-auxss")


@dataclass(frozen=True)
class EnvSettings:
    """Geometry and dynamics constants, file-overridable key by key."""

    world: tuple[float, float, float, float] = (0.0, 0.0, 10.0, 10.0)
    lava: tuple[tuple[float, float, float, float], ...] = (
        (4.0, 0.0, 6.0, 4.5),
        (4.0, 5.5, 6.0, 10.0),
    )
    goal: tuple[float, float] = (9.0, 5.0)
    goal_radius: float = 0.4
    start_blobs: tuple[tuple[float, float, float], ...] = ((1.0, 2.5, 0.3), (1.0, 7.5, 0.3))
    ood_points: tuple[tuple[float, float], ...] = (
        (1.0, 5.0), (2.5, 1.0), (2.5, 9.0), (3.5, 4.0), (3.5, 6.0), (0.5, 0.5),
    )
    ood_jitter: float = 0.15
    dt: float = 0.1
    f_max: float = 1.0
    v_max: float = 2.0
    drag: float = 0.1
    goal_reward: float = 1.0
    lava_reward: float = -1.0

    def geometry(self) -> WorldGeometry:
        return WorldGeometry(
            world=Rect(*self.world),
            lava=tuple(Rect(*r) for r in self.lava),
            goal_center=Vec2(*self.goal),
            goal_radius=self.goal_radius,
            start_blobs=tuple((Vec2(x, y), s) for x, y, s in self.start_blobs),
            ood_points=tuple(Vec2(x, y) for x, y in self.ood_points),
            ood_jitter=self.ood_jitter,
        )

    def build(self, horizon: int) -> LavaBridgeEnv:
        return LavaBridgeEnv(
            self.geometry(),
            dt=self.dt, f_max=self.f_max, v_max=self.v_max, drag=self.drag,
            goal_reward=self.goal_reward, lava_reward=self.lava_reward,
            horizon=horizon,
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs."""

    method: str = "auxss"
    t_max: int = 150_000
    horizon: int = 500
    seed: int = 0
    eval_interval: int = 5000
    eval_episodes: int = 20
    demo_archive: str | None = None
    demo_subset: int = 150
    env: EnvSettings = field(default_factory=EnvSettings)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.method in DEMO_METHODS and not self.demo_archive:
            raise ValueError(f"method {self.method!r} requires run.demo_archive")
        if self.horizon < 1 or self.t_max < 0:
            raise ValueError("horizon must be >= 1 and t_max >= 0")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ValueError("eval interval and episode count must be positive")

    def to_text(self) -> str:
        e, s, l = self.env, self.sampler, self.learner
        lines = [
            f"run.method = {self.method}",
            f"run.t_max = {self.t_max}",
            f"run.horizon = {self.horizon}",
            f"run.seed = {self.seed}",
            f"run.eval_interval = {self.eval_interval}",
            f"run.eval_episodes = {self.eval_episodes}",
            f"run.demo_subset = {self.demo_subset}",
        ]
        if self.demo_archive:
            lines.append(f"run.demo_archive = {self.demo_archive}")
        lines += [
            "env.world = " + _fmt_tuple(e.world),
            "env.lava = " + " ; ".join(_fmt_tuple(r) for r in e.lava),
            "env.goal = " + _fmt_tuple(e.goal),
            f"env.goal_radius = {e.goal_radius!r}",
            "env.start_blobs = " + " ; ".join(_fmt_tuple(b) for b in e.start_blobs),
            "env.ood_points = " + " ; ".join(_fmt_tuple(p) for p in e.ood_points),
            f"env.ood_jitter = {e.ood_jitter!r}",
            f"env.dt = {e.dt!r}",
            f"env.f_max = {e.f_max!r}",
            f"env.v_max = {e.v_max!r}",
            f"env.drag = {e.drag!r}",
            f"env.goal_reward = {e.goal_reward!r}",
            f"env.lava_reward = {e.lava_reward!r}",
            f"sampler.delta = {s.delta!r}",
            f"sampler.sigma = {s.sigma!r}",
            "sampler.scale = " + _fmt_tuple(s.scale),
            f"sampler.epsilon = {s.epsilon!r}",
            f"sampler.k_safety = {s.k_safety}",
            f"sampler.n_safety_rollouts = {s.n_safety_rollouts}",
            f"sampler.tau0 = {s.tau0!r}",
            f"sampler.tau1 = {s.tau1!r}",
            f"sampler.cause_aware = {'true' if s.cause_aware else 'false'}",
            f"learner.gamma = {l.gamma!r}",
            f"learner.lr = {l.lr!r}",
            f"learner.batch_size = {l.batch_size}",
            f"learner.tau = {l.tau!r}",
            f"learner.alpha = {l.alpha!r}",
            "learner.hidden = " + ",".join(str(h) for h in l.hidden),
            f"learner.grad_steps = {l.grad_steps}",
            f"learner.buffer_capacity = {l.buffer_capacity}",
            f"learner.log_std_min = {l.log_std_min!r}",
            f"learner.log_std_max = {l.log_std_max!r}",
            f"learner.dtype = {l.dtype}",
        ]
        return "\n".join(lines) + "\n"


def _fmt_tuple(vals) -> str:
    return ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals)


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; later duplicates win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip() != "")

def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip() != "")

def _groups(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(g) for g in text.split(";") if g.strip() != "")

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_ENV_PARSERS = {
    "world": _floats,
    "lava": _groups,
    "goal": _floats,
    "goal_radius": float,
    "start_blobs": _groups,
    "ood_points": _groups,
    "ood_jitter": float,
    "dt": float,
    "f_max": float,
    "v_max": float,
    "drag": float,
    "goal_reward": float,
    "lava_reward": float,
}

_SAMPLER_PARSERS = {
    "kind": str,
    "delta": float,
    "sigma": float,
    "scale": _floats,
    "epsilon": float,
    "k_safety": int,
    "n_safety_rollouts": int,
    "tau0": float,
    "tau1": float,
    "cause_aware": _bool,
}

_LEARNER_PARSERS = {
    "dtype": str,
    "gamma": float,
    "lr": float,
    "batch_size": int,
    "tau": float,
    "alpha": float,
    "hidden": _ints,
    "grad_steps": int,
    "buffer_capacity": int,
    "log_std_min": float,
    "log_std_max": float,
}

_RUN_PARSERS = {
    "method": str,
    "t_max": int,
    "horizon": int,
    "seed": int,
    "eval_interval": int,
    "eval_episodes": int,
    "demo_archive": str,
    "demo_subset": int,
}


def config_from_mapping(kv: dict[str, str]) -> RunConfig:
    env_kw: dict = {}
    sampler_kw: dict = {}
    learner_kw: dict = {}
    run_kw: dict = {}
    for key, val in kv.items():
        if "." not in key:
            raise ValueError(f"config key {key!r} is not namespaced (want section.name)")
        section, name = key.split(".", 1)
        table = {"env": (_ENV_PARSERS, env_kw), "sampler": (_SAMPLER_PARSERS, sampler_kw),
                 "learner": (_LEARNER_PARSERS, learner_kw), "run": (_RUN_PARSERS, run_kw)}.get(section)
        if table is None:
            raise ValueError(f"unknown config section {section!r} in key {key!r}")
        parsers, sink = table
        if name not in parsers:
            raise ValueError(f"unknown config key {key!r}")
        sink[name] = parsers[name](val)
    return RunConfig(
        env=EnvSettings(**env_kw),
        sampler=SamplerConfig(**sampler_kw),
        learner=LearnerConfig(**learner_kw),
        **run_kw,
    )


def load_run_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional file plus key overrides."""
    kv: dict[str, str] = {}
    if path is not None:
        with open(path) as fh:
            kv.update(parse_kv_text(fh.read()))
    if overrides:
        kv.update(overrides)
    return config_from_mapping(kv)
