"""Gridworld suite, offline data collection, and the value-iteration oracle.

All five benchmarks share one movement model.  An action encodes a direction
and a step size (``action = direction * n_step_sizes + (size - 1)``).  Compass
directions move cell by cell and clip at walls and bounds; the four extra
knight-like directions of the 12-direction lock environment jump by their
vector, requiring only the landing cell to be free.  An episode ends at the
first goal cell entered, even in the middle of a multi-cell move, and the step
penalty is charged on every step including the terminal one.

Environments:

- ``toy3``   6x6, 16 actions, three goals (+10/+10/+6), one walled row.
- ``toy4``   12x12, 128 actions, three goals (+10/+10/+6), no step penalty;
             the wall layout makes the best start-state value 0.95 * 10.
- ``toy5``   20x20, 64 actions, two warm +10 goals and two cold +15 goals
             behind cross walls with two-cell gaps.
- ``goalswitch``  6x6, 16 actions, a single +15 goal that relocates from
             (0,0) to (5,5) once the environment has served 10,000 steps.
- ``lock``   16x16, 144 actions, four quadrants of three keys plus a goal
             chamber; the first key picked commits the episode to a quadrant.

Offline datasets are produced by a shortest-path behaviour policy with
epsilon-uniform noise, per-episode goal bias, and a step-size class bias, and
are serialised as newline-delimited records with a small header.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "EnvSpec",
    "GridEnv",
    "LockEnv",
    "Obs",
    "OfflineDataset",
    "make_env",
    "env_names",
    "collect_offline",
    "save_dataset",
    "load_dataset",
    "value_iteration",
    "bfs_distances",
]

# Compass directions in fixed order N, NE, E, SE, S, SW, W, NW (row, col).
DIRS8: tuple[tuple[int, int], ...] = (
    (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1),
)
# Four knight-like extras for the 12-direction lock environment.
DIRS12: tuple[tuple[int, int], ...] = DIRS8 + ((-2, 1), (1, 2), (2, -1), (-1, -2))

Cell = tuple[int, int]
Obs = tuple[int, tuple[float, ...]]  # (flat cell index, env-specific extras)


@dataclass(frozen=True)
class EnvSpec:
    """Static description of one gridworld."""

    name: str
    height: int
    width: int
    directions: tuple[tuple[int, int], ...]
    n_step_sizes: int
    walls: frozenset
    goals: tuple[tuple[Cell, float], ...]
    start: Cell
    step_penalty: float
    max_steps: int
    switch_step: int | None = None
    switch_goals: tuple[tuple[Cell, float], ...] = ()
    cold_cells: frozenset = frozenset()

    @property
    def n_actions(self) -> int:
        return len(self.directions) * self.n_step_sizes

    @property
    def n_cells(self) -> int:
        return self.height * self.width

    def cell_index(self, cell: Cell) -> int:
        return cell[0] * self.width + cell[1]

    def index_cell(self, idx: int) -> Cell:
        return (idx // self.width, idx % self.width)

    def decode_action(self, action: int) -> tuple[tuple[int, int], int]:
        """Action index -> (direction vector, step size)."""
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} outside [0, {self.n_actions})")
        direction = self.directions[action // self.n_step_sizes]
        size = action % self.n_step_sizes + 1
        return direction, size

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.walls

    def all_goals(self) -> tuple[tuple[Cell, float], ...]:
        seen = dict(self.goals)
        for cell, reward in self.switch_goals:
            seen.setdefault(cell, reward)
        return tuple(seen.items())

    def trace_move(self, pos: Cell, action: int) -> list[Cell]:
        """Cells entered by ``action`` from ``pos``, clipped at walls/bounds.

        Compass directions advance one cell per repeat; knight-like
        directions jump by their full vector, so intermediate squares are
        never entered and only each landing cell must be free.
        """
        vec, size = self.decode_action(action)
        visited: list[Cell] = []
        cur = pos
        for _ in range(size):
            nxt = (cur[0] + vec[0], cur[1] + vec[1])
            if not self.free(nxt):
                break
            cur = nxt
            visited.append(cur)
        return visited


def _row_wall(row: int, width: int, gaps: tuple[int, ...]) -> set:
    return {(row, c) for c in range(width) if c not in gaps}


def _col_wall(col: int, height: int, gaps: tuple[int, ...]) -> set:
    return {(r, col) for r in range(height) if r not in gaps}


def _toy3_spec() -> EnvSpec:
    return EnvSpec(
        name="toy3",
        height=6,
        width=6,
        directions=DIRS8,
        n_step_sizes=2,
        walls=frozenset(_row_wall(2, 6, gaps=(1, 4))),
        goals=(((0, 0), 10.0), ((0, 5), 10.0), ((5, 5), 6.0)),
        start=(3, 3),
        step_penalty=-0.1,
        max_steps=20,
    )


def _toy4_spec() -> EnvSpec:
    # The single gap at column 5 blocks every one-move route to a +10 goal
    # from the start while leaving two-move routes open, which pins the
    # optimal start value at 0.95 * 10 under the toy discount.
    return EnvSpec(
        name="toy4",
        height=12,
        width=12,
        directions=DIRS8,
        n_step_sizes=16,
        walls=frozenset(_row_wall(3, 12, gaps=(5,))),
        goals=(((0, 0), 10.0), ((0, 11), 10.0), ((11, 11), 6.0)),
        start=(6, 5),
        step_penalty=0.0,
        max_steps=40,
    )


def _toy5_spec() -> EnvSpec:
    walls = _row_wall(10, 20, gaps=(4, 5, 14, 15)) | _col_wall(10, 20, gaps=(4, 5, 14, 15))
    return EnvSpec(
        name="toy5",
        height=20,
        width=20,
        directions=DIRS8,
        n_step_sizes=8,
        walls=frozenset(walls),
        goals=(
            ((2, 2), 10.0),
            ((2, 17), 10.0),
            ((17, 2), 15.0),
            ((17, 17), 15.0),
        ),
        start=(9, 9),
        step_penalty=-0.2,
        max_steps=40,
        cold_cells=frozenset({(17, 2), (17, 17)}),
    )


def _goalswitch_spec() -> EnvSpec:
    return EnvSpec(
        name="goalswitch",
        height=6,
        width=6,
        directions=DIRS8,
        n_step_sizes=2,
        walls=frozenset(),
        goals=(((0, 0), 15.0),),
        start=(3, 3),
        step_penalty=-0.1,
        max_steps=20,
        switch_step=10_000,
        switch_goals=(((5, 5), 15.0),),
    )


# Lock quadrant geometry: keys and goal chamber of quadrant 0, translated into
# the other three 8x8 quadrants.
LOCK_KEYS_BASE: tuple[Cell, ...] = ((2, 2), (2, 5), (5, 2))
LOCK_GOAL_BASE: Cell = (5, 5)
LOCK_N_QUADRANTS = 4
LOCK_KEYS_PER_QUADRANT = 3


def lock_quadrant_cells(quadrant: int) -> tuple[tuple[Cell, ...], Cell]:
    dr = 0 if quadrant in (0, 1) else 8
    dc = 0 if quadrant in (0, 2) else 8
    keys = tuple((r + dr, c + dc) for r, c in LOCK_KEYS_BASE)
    goal = (LOCK_GOAL_BASE[0] + dr, LOCK_GOAL_BASE[1] + dc)
    return keys, goal


def _lock_spec() -> EnvSpec:
    goal_cells = tuple(lock_quadrant_cells(q)[1] for q in range(LOCK_N_QUADRANTS))
    return EnvSpec(
        name="lock",
        height=16,
        width=16,
        directions=DIRS12,
        n_step_sizes=12,
        walls=frozenset(),
        goals=tuple((cell, 10.0) for cell in goal_cells),
        start=(8, 8),
        step_penalty=-0.1,
        max_steps=80,
    )


_SPECS = {
    "toy3": _toy3_spec,
    "toy4": _toy4_spec,
    "toy5": _toy5_spec,
    "goalswitch": _goalswitch_spec,
    "lock": _lock_spec,
}


def env_names() -> tuple[str, ...]:
    return tuple(sorted(_SPECS))


class GridEnv:
    """Deterministic gridworld with flat-index observations and no extras."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.pos: Cell = spec.start
        self.episode_steps = 0
        self.total_steps = 0
        self.done = False
        self._needs_reset = True

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    @property
    def n_extras(self) -> int:
        return 0

    @property
    def obs_dim(self) -> int:
        return self.spec.n_cells

    def active_goals(self) -> dict:
        if self.spec.switch_step is not None and self.total_steps >= self.spec.switch_step:
            return dict(self.spec.switch_goals)
        return dict(self.spec.goals)

    def _obs(self) -> Obs:
        return (self.spec.cell_index(self.pos), ())

    def reset(self) -> Obs:
        self.pos = self.spec.start
        self.episode_steps = 0
        self.done = False
        self._needs_reset = False
        return self._obs()

    def step(self, action: int) -> tuple[Obs, float, bool]:
        if self._needs_reset or self.done:
            raise RuntimeError("episode finished; call reset()")
        goals = self.active_goals()
        reward = self.spec.step_penalty
        for cell in self.spec.trace_move(self.pos, action):
            self.pos = cell
            if cell in goals:
                reward += goals[cell]
                self.done = True
                break
        self.episode_steps += 1
        self.total_steps += 1
        if self.episode_steps >= self.spec.max_steps:
            self.done = True
        return self._obs(), reward, self.done

    def features_batch(self, obs_idx: np.ndarray, extras: np.ndarray | None = None) -> np.ndarray:
        obs_idx = np.asarray(obs_idx, dtype=np.int64)
        out = np.zeros((obs_idx.shape[0], self.obs_dim))
        out[np.arange(obs_idx.shape[0]), obs_idx] = 1.0
        return out

    def features(self, obs: Obs) -> np.ndarray:
        return self.features_batch(np.array([obs[0]]), np.array([obs[1]]))[0]


class LockEnv(GridEnv):
    """Keyed quadrant gridworld.

    Each episode a hidden quadrant is active.  Keys are worth +1 and the first
    key picked commits the episode to that quadrant (other quadrants' keys go
    inert).  Entering any goal chamber ends the episode: +10 when it is the
    active quadrant's chamber and all three of its keys are held, -3 otherwise.
    Observations carry two extras: keys held and the committed quadrant (-1
    before commitment).
    """

    def __init__(self, spec: EnvSpec, rng: np.random.Generator | None = None):
        super().__init__(spec)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.active_quadrant = 0
        self.committed = -1
        self.keys_held: set = set()
        self._key_cells = {}
        self._goal_cells = {}
        for q in range(LOCK_N_QUADRANTS):
            keys, goal = lock_quadrant_cells(q)
            for cell in keys:
                self._key_cells[cell] = q
            self._goal_cells[goal] = q
        self.last_success = False

    @property
    def n_extras(self) -> int:
        return 2

    @property
    def obs_dim(self) -> int:
        # position one-hot, keys-held fraction, committed-quadrant one-hot
        return self.spec.n_cells + 1 + LOCK_N_QUADRANTS

    def _obs(self) -> Obs:
        return (self.spec.cell_index(self.pos), (float(len(self.keys_held)), float(self.committed)))

    def reset(self) -> Obs:
        self.active_quadrant = int(self.rng.integers(LOCK_N_QUADRANTS))
        self.committed = -1
        self.keys_held = set()
        self.last_success = False
        return super().reset()

    def step(self, action: int) -> tuple[Obs, float, bool]:
        if self._needs_reset or self.done:
            raise RuntimeError("episode finished; call reset()")
        reward = self.spec.step_penalty
        for cell in self.spec.trace_move(self.pos, action):
            self.pos = cell
            if cell in self._goal_cells:
                q = self._goal_cells[cell]
                correct = (
                    q == self.active_quadrant
                    and self.committed == q
                    and len(self.keys_held) == LOCK_KEYS_PER_QUADRANT
                )
                reward += 10.0 if correct else -3.0
                self.last_success = correct
                self.done = True
                break
            if cell in self._key_cells and cell not in self.keys_held:
                q = self._key_cells[cell]
                if self.committed in (-1, q):
                    self.committed = q
                    self.keys_held.add(cell)
                    reward += 1.0
        self.episode_steps += 1
        self.total_steps += 1
        if self.episode_steps >= self.spec.max_steps:
            self.done = True
        return self._obs(), reward, self.done

    def features_batch(self, obs_idx: np.ndarray, extras: np.ndarray | None = None) -> np.ndarray:
        obs_idx = np.asarray(obs_idx, dtype=np.int64)
        n = obs_idx.shape[0]
        if extras is None:
            raise ValueError("lock observations need (keys, quadrant) extras")
        extras = np.asarray(extras, dtype=np.float64).reshape(n, 2)
        out = np.zeros((n, self.obs_dim))
        out[np.arange(n), obs_idx] = 1.0
        out[:, self.spec.n_cells] = extras[:, 0] / LOCK_KEYS_PER_QUADRANT
        quad = extras[:, 1].astype(np.int64)
        committed = quad >= 0
        out[np.nonzero(committed)[0], self.spec.n_cells + 1 + quad[committed]] = 1.0
        return out


def make_env(name: str, rng: np.random.Generator | None = None) -> GridEnv:
    if name not in _SPECS:
        raise ValueError(f"unknown environment {name!r}; choose from {env_names()}")
    spec = _SPECS[name]()
    if name == "lock":
        return LockEnv(spec, rng)
    return GridEnv(spec)


# ---------------------------------------------------------------------------
# Value iteration (position-only environments)
# ---------------------------------------------------------------------------


def value_iteration(
    env: GridEnv,
    gamma: float,
    tol: float = 1e-13,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Tabular optimal values over cells for the environment's current phase.

    Only environments whose state is the position alone are supported; the
    keyed lock environment would need the full key/commitment state space.
    Wall cells get NaN, goal cells 0 (terminal).
    """
    if env.n_extras != 0:
        raise ValueError("value iteration supports position-only environments")
    spec = env.spec
    goals = env.active_goals()
    n = spec.n_cells
    next_idx = np.zeros((n, spec.n_actions), dtype=np.int64)
    rewards = np.zeros((n, spec.n_actions))
    dones = np.zeros((n, spec.n_actions), dtype=bool)
    valid = np.zeros(n, dtype=bool)
    for idx in range(n):
        cell = spec.index_cell(idx)
        if not spec.free(cell) or cell in goals:
            continue
        valid[idx] = True
        for a in range(spec.n_actions):
            final = cell
            r = spec.step_penalty
            done = False
            for visited in spec.trace_move(cell, a):
                final = visited
                if visited in goals:
                    r += goals[visited]
                    done = True
                    break
            next_idx[idx, a] = spec.cell_index(final)
            rewards[idx, a] = r
            dones[idx, a] = done
    v = np.zeros(n)
    for _ in range(max_iter):
        q = rewards + gamma * np.where(dones, 0.0, v[next_idx])
        v_new = np.where(valid, q.max(axis=1), v)
        delta = float(np.abs(v_new - v).max())
        v = v_new
        if delta < tol:
            break
    out = v.copy()
    for idx in range(n):
        cell = spec.index_cell(idx)
        if cell in spec.walls:
            out[idx] = np.nan
        elif cell in goals:
            out[idx] = 0.0
    return out


def bfs_distances(spec: EnvSpec, target: Cell) -> np.ndarray:
    """Unit-move shortest-path distances (8 compass directions) to ``target``."""
    dist = np.full((spec.height, spec.width), -1, dtype=np.int64)
    if not spec.free(target):
        raise ValueError(f"target {target} is not a free cell")
    dist[target] = 0
    frontier = [target]
    while frontier:
        nxt: list[Cell] = []
        for cell in frontier:
            for vec in DIRS8:
                nb = (cell[0] + vec[0], cell[1] + vec[1])
                if spec.free(nb) and dist[nb] < 0:
                    dist[nb] = dist[cell] + 1
                    nxt.append(nb)
        frontier = nxt
    return dist


# ---------------------------------------------------------------------------
# Offline data collection
# ---------------------------------------------------------------------------


@dataclass
class OfflineDataset:
    """Flat transition arrays plus collection statistics."""

    env_name: str
    seed: int
    obs_idx: np.ndarray
    extras: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_idx: np.ndarray
    next_extras: np.ndarray
    dones: np.ndarray
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.obs_idx.shape[0])


@dataclass
class _BehaviourProfile:
    # (target description, probability) pairs; targets are goal cells except
    # for the lock where they are quadrant indices.
    targets: tuple
    target_probs: tuple
    small_sizes: tuple[int, ...] | None
    small_prob: float
    eps: float = 0.1


def _behaviour_profile(name: str) -> _BehaviourProfile:
    if name == "toy3":
        return _BehaviourProfile(
            targets=((0, 0), (0, 5), (5, 5)),
            target_probs=(0.6, 0.3, 0.1),
            small_sizes=(1,),
            small_prob=0.85,
        )
    if name == "toy4":
        return _BehaviourProfile(
            targets=((0, 0), (0, 11), (11, 11)),
            target_probs=(0.6, 0.3, 0.1),
            small_sizes=(1, 2),
            small_prob=0.85,
        )
    if name == "toy5":
        return _BehaviourProfile(
            targets=((2, 2), (2, 17)),
            target_probs=(0.5, 0.5),
            small_sizes=None,
            small_prob=0.0,
        )
    if name == "goalswitch":
        return _BehaviourProfile(
            targets=((0, 0),),
            target_probs=(1.0,),
            small_sizes=(1,),
            small_prob=0.85,
        )
    if name == "lock":
        return _BehaviourProfile(
            targets=(0, 1),
            target_probs=(0.5, 0.5),
            small_sizes=None,
            small_prob=0.0,
        )
    raise ValueError(f"no behaviour profile for {name!r}")


def _size_pool(spec: EnvSpec, profile: _BehaviourProfile, rng: np.random.Generator) -> tuple[int, ...]:
    if profile.small_sizes is None:
        return tuple(range(1, spec.n_step_sizes + 1))
    if rng.random() < profile.small_prob:
        return profile.small_sizes
    return tuple(s for s in range(1, spec.n_step_sizes + 1) if s not in profile.small_sizes)


def _landing(spec: EnvSpec, pos: Cell, action: int, goals: dict) -> Cell:
    cur = pos
    for cell in spec.trace_move(pos, action):
        cur = cell
        if cell in goals:
            break
    return cur


def _greedy_action(
    spec: EnvSpec,
    pos: Cell,
    dist: np.ndarray,
    sizes: tuple[int, ...],
    goals: dict,
    rng: np.random.Generator,
    eps: float,
) -> int:
    pool = [
        d * spec.n_step_sizes + (s - 1)
        for d in range(len(spec.directions))
        for s in sizes
    ]
    if rng.random() < eps:
        return int(pool[rng.integers(len(pool))])
    best_action = pool[0]
    best_dist = np.inf
    for a in pool:
        land = _landing(spec, pos, a, goals)
        d = dist[land]
        if d < 0:
            continue
        if d < best_dist:
            best_dist = d
            best_action = a
    return int(best_action)


def _collect_episode(
    env: GridEnv,
    profile: _BehaviourProfile,
    rng: np.random.Generator,
) -> tuple[list, Cell | None, object]:
    """One behaviour episode.  Returns (transitions, terminal goal cell, target)."""
    spec = env.spec
    target_pick = rng.choice(len(profile.targets), p=np.asarray(profile.target_probs))
    target = profile.targets[int(target_pick)]
    obs = env.reset()
    goals = env.active_goals()
    if spec.name == "lock":
        keys, chamber = lock_quadrant_cells(int(target))
        waypoints = list(keys) + [chamber]
    else:
        waypoints = [target]
    dist_maps = {wp: bfs_distances(spec, wp) for wp in waypoints}
    wp_i = 0
    transitions = []
    terminal_goal: Cell | None = None
    while True:
        pos = spec.index_cell(obs[0])
        while wp_i < len(waypoints) - 1 and pos == waypoints[wp_i]:
            wp_i += 1
        sizes = _size_pool(spec, profile, rng)
        action = _greedy_action(
            spec, pos, dist_maps[waypoints[wp_i]], sizes, goals, rng, profile.eps
        )
        next_obs, reward, done = env.step(action)
        transitions.append((obs, action, reward, next_obs, done))
        obs = next_obs
        if done:
            cell = spec.index_cell(obs[0])
            if cell in goals:
                terminal_goal = cell
            break
    return transitions, terminal_goal, target


def collect_offline(env: GridEnv, n_episodes: int, seed: int) -> OfflineDataset:
    """Collect the biased behaviour dataset for ``env``.

    For ``toy5`` any episode that terminates at a cold goal is rejected and
    recollected, so cold-goal transitions never appear offline.
    """
    rng = np.random.default_rng(seed)
    spec = env.spec
    profile = _behaviour_profile(spec.name)
    records = []
    target_counts: dict = {}
    terminal_counts: dict = {}
    rejected = 0
    episodes = 0
    while episodes < n_episodes:
        transitions, terminal_goal, target = _collect_episode(env, profile, rng)
        if terminal_goal is not None and terminal_goal in spec.cold_cells:
            rejected += 1
            continue
        episodes += 1
        records.extend(transitions)
        target_counts[target] = target_counts.get(target, 0) + 1
        if terminal_goal is not None:
            terminal_counts[terminal_goal] = terminal_counts.get(terminal_goal, 0) + 1
    n = len(records)
    n_extras = env.n_extras
    ds = OfflineDataset(
        env_name=spec.name,
        seed=seed,
        obs_idx=np.array([r[0][0] for r in records], dtype=np.int64),
        extras=np.array([r[0][1] for r in records], dtype=np.float64).reshape(n, n_extras),
        actions=np.array([r[1] for r in records], dtype=np.int64),
        rewards=np.array([r[2] for r in records], dtype=np.float64),
        next_idx=np.array([r[3][0] for r in records], dtype=np.int64),
        next_extras=np.array([r[3][1] for r in records], dtype=np.float64).reshape(n, n_extras),
        dones=np.array([r[4] for r in records], dtype=bool),
    )
    sizes = ds.actions % spec.n_step_sizes + 1
    ds.stats = {
        "episodes": episodes,
        "transitions": n,
        "rejected_episodes": rejected,
        "step1_fraction": float(np.mean(sizes == 1)),
        "target_counts": {str(k): int(v) for k, v in sorted(target_counts.items(), key=str)},
        "terminal_goal_counts": {str(k): int(v) for k, v in sorted(terminal_counts.items(), key=str)},
    }
    return ds


DATASET_MAGIC = "flowrl-dataset-v1"


def save_dataset(path: str | Path, ds: OfflineDataset) -> None:
    """Newline-delimited records with a header naming the environment and seed.

    Columns: obs_index, action, reward, next_obs_index, done, then any
    env-specific extras (current then next observation).
    """
    n_extras = ds.extras.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {DATASET_MAGIC} env={ds.env_name} seed={ds.seed} extras={n_extras}\n")
        cols = ["obs_index", "action", "reward", "next_obs_index", "done"]
        cols += [f"extra{i}" for i in range(n_extras)]
        cols += [f"next_extra{i}" for i in range(n_extras)]
        fh.write(",".join(cols) + "\n")
        for i in range(len(ds)):
            row = [
                str(int(ds.obs_idx[i])),
                str(int(ds.actions[i])),
                repr(float(ds.rewards[i])),
                str(int(ds.next_idx[i])),
                str(int(ds.dones[i])),
            ]
            row += [repr(float(x)) for x in ds.extras[i]]
            row += [repr(float(x)) for x in ds.next_extras[i]]
            fh.write(",".join(row) + "\n")


def load_dataset(path: str | Path) -> OfflineDataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith(f"# {DATASET_MAGIC}"):
            raise ValueError(f"{path}: not a flowrl dataset")
        fields = dict(part.split("=", 1) for part in header.split()[2:])
        env_name = fields["env"]
        seed = int(fields["seed"])
        n_extras = int(fields["extras"])
        fh.readline()  # column header
        body = fh.read()
    data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    n = data.shape[0]
    return OfflineDataset(
        env_name=env_name,
        seed=seed,
        obs_idx=data[:, 0].astype(np.int64),
        actions=data[:, 1].astype(np.int64),
        rewards=data[:, 2].astype(np.float64),
        next_idx=data[:, 3].astype(np.int64),
        dones=data[:, 4].astype(bool),
        extras=data[:, 5 : 5 + n_extras].astype(np.float64).reshape(n, n_extras),
        next_extras=data[:, 5 + n_extras : 5 + 2 * n_extras].astype(np.float64).reshape(n, n_extras),
        stats={"loaded_from": str(path)},
    )
