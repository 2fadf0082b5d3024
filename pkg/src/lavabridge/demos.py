"""Scripted expert demonstrations and the demo-archive file format.

The expert is a waypoint-following PD controller steering through the bridge
corridor to the goal. Archives store full transitions even though the
start-state samplers only consume states, so buffer prefill and demo-size
sweeps reuse the same artifact.

Archive CSV layout (after ``# key = value`` metadata comment lines):

    episode,t,px,py,vx,vy,ax,ay,r,done

Each trajectory of length L occupies L+1 rows: rows t=0..L-1 hold the
transition taken at step t (state, action, reward, done flag), and one
trailing row t=L carries the terminal state reached (with zero action and
reward, done=1) so next-states round-trip exactly. Floats are written with
17 significant digits, which is lossless for binary64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import Action, Cause, LavaBridgeEnv, State, Vec2, WorldGeometry
from .replay import Transition
from .rngs import substream
from .samplers import DemoStates

__all__ = [
    "ArchiveFormatError",
    "DemoArchive",
    "DemoTrajectory",
    "EXPERT_KP",
    "EXPERT_KD",
    "WAYPOINT_RADIUS",
    "scripted_expert",
    "generate_demos",
    "subsample_states",
    "save_archive",
    "load_archive",
]

# PD gains and waypoint handoff radius; tuned so the corridor is crossed
# centrally at moderate speed (success 200/200 from p0, median episode ~176
# steps). Damping below ~1.6 overshoots the corridor mouth into lava.
EXPERT_KP = 1.0
EXPERT_KD = 3.0
WAYPOINT_RADIUS = 0.5


class ArchiveFormatError(ValueError):
    """Malformed or mismatched demo archive file."""


def _waypoints(geometry: WorldGeometry) -> tuple[Vec2, ...]:
    # Bridge entrance, bridge exit, then the goal itself.
    return (Vec2(4.0, 5.0), Vec2(6.0, 5.0), geometry.goal_center)


def scripted_expert(
    state: State,
    geometry: WorldGeometry,
    k_p: float = EXPERT_KP,
    k_d: float = EXPERT_KD,
    f_max: float = 1.0,
) -> Action:
    """PD force toward the active waypoint.

    A waypoint counts as passed once the agent is within WAYPOINT_RADIUS of
    it or beyond it along x (travel is left to right), which makes the
    selection a pure function of the state.
    """
    px, py = state.position.x, state.position.y
    target = None
    for wp in _waypoints(geometry):
        passed = math.hypot(px - wp.x, py - wp.y) <= WAYPOINT_RADIUS or px > wp.x
        if not passed:
            target = wp
            break
    if target is None:
        target = geometry.goal_center
    fx = k_p * (target.x - px) - k_d * state.velocity.x
    fy = k_p * (target.y - py) - k_d * state.velocity.y
    fx = max(-f_max, min(f_max, fx))
    fy = max(-f_max, min(f_max, fy))
    return Action(Vec2(fx, fy))


@dataclass(frozen=True)
class DemoTrajectory:
    """One goal-terminated expert episode."""

    episode_id: int
    transitions: tuple[Transition, ...]

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def terminal_state(self) -> State:
        return self.transitions[-1].next_state

    def validate(self, goal_reward: float) -> None:
        if not self.transitions:
            raise ArchiveFormatError(f"episode {self.episode_id} has no transitions")
        last = self.transitions[-1]
        if not last.done or last.reward != goal_reward:
            raise ArchiveFormatError(f"episode {self.episode_id} does not end at the goal")
        for tr in self.transitions[:-1]:
            if tr.done or tr.reward != 0.0:
                raise ArchiveFormatError(
                    f"episode {self.episode_id} has a non-terminal reward or early done flag"
                )


@dataclass(frozen=True)
class DemoArchive:
    """Immutable bundle of demo trajectories plus provenance metadata."""

    trajectories: tuple[DemoTrajectory, ...]
    seed: int
    geometry_hash: str

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def transitions(self) -> list[Transition]:
        return [tr for traj in self.trajectories for tr in traj.transitions]

    def demo_states(self) -> DemoStates:
        """Flattened view: the state each demo action was taken from."""
        states: list[State] = []
        tids: list[int] = []
        for traj in self.trajectories:
            for tr in traj.transitions:
                states.append(tr.state)
                tids.append(traj.episode_id)
        return DemoStates(states=tuple(states), trajectory_ids=tuple(tids))


def generate_demos(env: LavaBridgeEnv, n_transitions: int, seed: int) -> DemoArchive:
    """Collect exactly ``n_transitions`` expert transitions from p0 episodes.

    Runs scripted-expert episodes until enough transitions from successful
    (goal-terminated) episodes are banked; failed episodes are discarded. The
    final trajectory is trimmed from its head so every kept trajectory still
    ends at the goal and the total is exact. Aborts if more than half the
    episodes fail, which signals broken controller gains.
    """
    if n_transitions < 1:
        raise ValueError("need a positive number of demo transitions")
    rng = substream(seed, "demo")
    trajectories: list[DemoTrajectory] = []
    collected = 0
    episodes = failures = 0
    while collected < n_transitions:
        episodes += 1
        if episodes > 8 and failures / episodes > 0.5:
            raise RuntimeError(
                f"expert failed {failures}/{episodes} episodes; controller gains are unsafe"
            )
        s0 = env.sample_start("p0", rng)
        env.reset_to(s0)
        transitions: list[Transition] = []
        cause = Cause.NONE
        while True:
            state = env.state
            action = scripted_expert(state, env.geometry, f_max=env.f_max)
            res = env.step(action)
            transitions.append(
                Transition(state, action, res.reward,
                           res.next_state, res.cause in (Cause.GOAL, Cause.LAVA))
            )
            if res.terminated:
                cause = res.cause
                break
        if cause is not Cause.GOAL:
            failures += 1
            continue
        trajectories.append(DemoTrajectory(episode_id=len(trajectories), transitions=tuple(transitions)))
        collected += len(transitions)
    excess = collected - n_transitions
    if excess:
        last = trajectories[-1]
        if excess >= len(last):
            raise RuntimeError("trim bookkeeping error")  # cannot happen: previous total < n
        trajectories[-1] = DemoTrajectory(
            episode_id=last.episode_id, transitions=last.transitions[excess:]
        )
    return DemoArchive(
        trajectories=tuple(trajectories), seed=seed, geometry_hash=env.geometry_hash()
    )


def subsample_states(archive: DemoArchive, m: int, seed: int) -> DemoStates:
    """Uniform random subset (without replacement) of the flattened demo states.

    Selected indices are kept in archive order, so the subset is stable for a
    given seed regardless of how it is consumed.
    """
    demo = archive.demo_states()
    if not (1 <= m <= len(demo)):
        raise ValueError(f"subset size {m} outside [1, {len(demo)}]")
    rng = substream(seed, "demo", 1)
    idx = np.sort(rng.choice(len(demo), size=m, replace=False))
    return DemoStates(
        states=tuple(demo.states[i] for i in idx),
        trajectory_ids=tuple(demo.trajectory_ids[i] for i in idx),
    )


# -- archive file IO -----------------------------------------------------------

_HEADER = "episode,t,px,py,vx,vy,ax,ay,r,done"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_archive(archive: DemoArchive, path) -> None:
    lines = [
        f"# seed = {archive.seed}",
        f"# geometry = {archive.geometry_hash}",
        f"# transitions = {archive.n_transitions}",
        _HEADER,
    ]
    for traj in archive.trajectories:
        for t, tr in enumerate(traj.transitions):
            lines.append(",".join([
                str(traj.episode_id), str(t),
                _fmt(tr.state.position.x), _fmt(tr.state.position.y),
                _fmt(tr.state.velocity.x), _fmt(tr.state.velocity.y),
                _fmt(tr.action.force.x), _fmt(tr.action.force.y),
                _fmt(tr.reward), "1" if tr.done else "0",
            ]))
        term = traj.terminal_state
        lines.append(",".join([
            str(traj.episode_id), str(len(traj.transitions)),
            _fmt(term.position.x), _fmt(term.position.y),
            _fmt(term.velocity.x), _fmt(term.velocity.y),
            _fmt(0.0), _fmt(0.0), _fmt(0.0), "1",
        ]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_archive(path, expected_geometry_hash: str | None = None, goal_reward: float = 1.0) -> DemoArchive:
    """Parse and validate an archive; checks the geometry stamp when given."""
    meta: dict[str, str] = {}
    rows: list[tuple[int, int, list[float], int]] = []
    with open(path) as fh:
        header_seen = False
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, val = line[1:].split("=", 1)
                    meta[key.strip()] = val.strip()
                continue
            if not header_seen:
                if line != _HEADER:
                    raise ArchiveFormatError(f"line {lineno}: unexpected header {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 10:
                raise ArchiveFormatError(f"line {lineno}: expected 10 fields, got {len(parts)}")
            try:
                episode = int(parts[0])
                t = int(parts[1])
                vals = [float(v) for v in parts[2:9]]
                done = int(parts[9])
            except ValueError as exc:
                raise ArchiveFormatError(f"line {lineno}: {exc}") from None
            if done not in (0, 1):
                raise ArchiveFormatError(f"line {lineno}: done flag must be 0 or 1")
            rows.append((episode, t, vals, done))
    if not header_seen:
        raise ArchiveFormatError("missing archive header")
    if expected_geometry_hash is not None and meta.get("geometry") != expected_geometry_hash:
        raise ArchiveFormatError(
            f"geometry hash mismatch: archive {meta.get('geometry')!r}, env {expected_geometry_hash!r}"
        )

    by_episode: dict[int, list[tuple[int, list[float], int]]] = {}
    for episode, t, vals, done in rows:
        by_episode.setdefault(episode, []).append((t, vals, done))

    trajectories: list[DemoTrajectory] = []
    for episode in sorted(by_episode):
        erows = by_episode[episode]
        if [t for t, _, _ in erows] != list(range(len(erows))):
            raise ArchiveFormatError(f"episode {episode}: non-contiguous step indices")
        if len(erows) < 2:
            raise ArchiveFormatError(f"episode {episode}: truncated (no terminal-state row)")
        if erows[-1][2] != 1:
            raise ArchiveFormatError(f"episode {episode}: missing terminal-state row")
        transitions = []
        for (t, vals, done), (_, nvals, _) in zip(erows[:-1], erows[1:]):
            px, py, vx, vy, ax, ay, r = vals
            npx, npy, nvx, nvy = nvals[0], nvals[1], nvals[2], nvals[3]
            transitions.append(Transition(
                state=State(Vec2(px, py), Vec2(vx, vy)),
                action=Action(Vec2(ax, ay)),
                reward=r,
                next_state=State(Vec2(npx, npy), Vec2(nvx, nvy)),
                done=bool(done),
            ))
        traj = DemoTrajectory(episode_id=episode, transitions=tuple(transitions))
        traj.validate(goal_reward)
        trajectories.append(traj)

    try:
        seed = int(meta.get("seed", "-1"))
    except ValueError:
        seed = -1
    n_claimed = meta.get("transitions")
    archive = DemoArchive(
        trajectories=tuple(trajectories), seed=seed,
        geometry_hash=meta.get("geometry", ""),
    )
    if n_claimed is not None and int(n_claimed) != archive.n_transitions:
        raise ArchiveFormatError(
            f"metadata claims {n_claimed} transitions, file holds {archive.n_transitions}"
        )
    return archive
