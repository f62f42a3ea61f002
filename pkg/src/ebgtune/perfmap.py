"""Per-player performance maps: a grid of support vectors storing the best
known (action, utility) per state region, queried by inverse-distance
interpolation.

States are normalized to [0, 1] per dimension before any distance is
computed, so dimensions of very different physical scale weigh equally.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite

import numpy as np

from .errors import ConfigError, EmptyMapError
from .game import ActionBounds

_COINCIDENT_D2 = 1e-24  # squared distance below which a support is "exact"


@dataclass
class PerformanceMap:
    state_ranges: np.ndarray  # (dims, 2) physical [low, high] per dimension
    resolution: tuple[int, ...]
    bounds: ActionBounds
    gamma_map: float
    coords: np.ndarray  # (n_supports, dims), normalized grid nodes
    actions: np.ndarray  # (n_supports,)
    utilities: np.ndarray  # (n_supports,), -inf until initialized
    initialized: np.ndarray  # (n_supports,) bool
    # most recent (action, utility) sample per support, the reference point
    # for the gradient-based secant; utility -inf marks "no sample yet"
    last_actions: np.ndarray = None
    last_utilities: np.ndarray = None
    visits: np.ndarray = None  # gradient-based update count per support

    def __post_init__(self):
        n = self.actions.shape[0]
        if self.last_actions is None:
            self.last_actions = np.zeros(n)
        if self.last_utilities is None:
            self.last_utilities = np.full(n, -np.inf)
        if self.visits is None:
            self.visits = np.zeros(n, dtype=np.int64)

    @property
    def n_supports(self) -> int:
        return self.actions.shape[0]

    def normalize(self, state) -> np.ndarray:
        s = np.asarray(state, dtype=float)
        low = self.state_ranges[:, 0]
        high = self.state_ranges[:, 1]
        return np.clip((s - low) / (high - low), 0.0, 1.0)

    def nearest_index(self, state) -> int:
        """Nearest support by normalized Euclidean distance; ties resolve to
        the lowest linear index."""
        q = self.normalize(state)
        d2 = ((self.coords - q) ** 2).sum(axis=1)
        return int(np.argmin(d2))


def init_map(
    state_ranges,
    resolution,
    bounds: ActionBounds,
    seed: int,
    gamma_map: float = 0.01,
) -> PerformanceMap:
    """Build a map with supports on a uniform grid and random initial actions."""
    ranges = np.asarray(state_ranges, dtype=float).reshape(-1, 2)
    resolution = tuple(int(r) for r in resolution)
    if len(resolution) != ranges.shape[0]:
        raise ConfigError("resolution and state_ranges dimensions differ")
    if any(r < 2 for r in resolution):
        raise ConfigError("need resolution >= 2 per dimension")
    if np.any(ranges[:, 0] >= ranges[:, 1]):
        raise ConfigError("state range needs low < high")
    if gamma_map < 0:
        raise ConfigError("gamma_map must be >= 0")
    axes = [np.linspace(0.0, 1.0, r) for r in resolution]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    n = coords.shape[0]
    rng = np.random.default_rng(seed)
    actions = rng.uniform(bounds.min, bounds.max, size=n)
    return PerformanceMap(
        state_ranges=ranges,
        resolution=resolution,
        bounds=bounds,
        gamma_map=float(gamma_map),
        coords=coords,
        actions=actions,
        utilities=np.full(n, -np.inf),
        initialized=np.zeros(n, dtype=bool),
    )


def interpolate_action(pmap: PerformanceMap, state) -> float:
    """Inverse-distance weighted action over all initialized supports.

    Weights are 1 / (d^2 + gamma_map).  With gamma_map = 0 a query that
    coincides with a support returns that support's action exactly.
    """
    init = pmap.initialized
    if not init.any():
        raise EmptyMapError("performance map has no initialized support")
    q = pmap.normalize(state)
    coords = pmap.coords[init]
    actions = pmap.actions[init]
    d2 = ((coords - q) ** 2).sum(axis=1)
    if pmap.gamma_map == 0.0:
        hit = np.nonzero(d2 < _COINCIDENT_D2)[0]
        if hit.size:
            return float(actions[hit[0]])
    w = 1.0 / (d2 + pmap.gamma_map)
    return float((w @ actions) / w.sum())


def update_best_response(pmap: PerformanceMap, state, action: float, utility: float):
    """Overwrite the nearest support only if the observed utility improves it."""
    if not (isfinite(action) and isfinite(utility)):
        raise ValueError("action and utility must be finite")
    i = pmap.nearest_index(state)
    if not pmap.initialized[i] or utility > pmap.utilities[i]:
        pmap.actions[i] = pmap.bounds.clip(action)
        pmap.utilities[i] = utility
        pmap.initialized[i] = True


def update_gradient_based(
    pmap: PerformanceMap,
    state,
    action: float,
    utility: float,
    learning_rate: float,
    trust_decay: float = 1.0,
):
    """Move the nearest support's action along a one-sample secant slope.

    The secant runs between the new sample and the previous sample at the
    same support (the stored support pair seeds the reference when no
    sample has been taken yet, e.g. after loading a map from disk).  The
    step is clamped to a trust region of a quarter of the action span,
    shrunk by ``trust_decay`` per visit of that support, so a short noisy
    chord cannot catapult a converged action across the range while a
    rarely visited support can still take full-size corrective steps.
    Falls back to the best-response rule when the support is uninitialized
    or the chord is degenerate.
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be > 0")
    if not 0.0 < trust_decay <= 1.0:
        raise ValueError("trust_decay must be in (0, 1]")
    i = pmap.nearest_index(state)
    if not pmap.initialized[i]:
        update_best_response(pmap, state, action, utility)
        pmap.last_actions[i] = action
        pmap.last_utilities[i] = utility
        return
    if isfinite(pmap.last_utilities[i]):
        ref_a, ref_u = pmap.last_actions[i], pmap.last_utilities[i]
    else:
        ref_a, ref_u = pmap.actions[i], pmap.utilities[i]
    if abs(action - ref_a) < 1e-9:
        update_best_response(pmap, state, action, utility)
    else:
        g = (utility - ref_u) / (action - ref_a)
        step = learning_rate * g
        limit = 0.25 * pmap.bounds.span * trust_decay ** int(pmap.visits[i])
        step = min(max(step, -limit), limit)
        pmap.actions[i] = pmap.bounds.clip(pmap.actions[i] + step)
        pmap.utilities[i] = utility
        pmap.visits[i] += 1
    pmap.last_actions[i] = action
    pmap.last_utilities[i] = utility


def explore_action(
    pmap: PerformanceMap,
    state,
    bounds: ActionBounds,
    episode_index: int,
    rng: np.random.Generator,
    eps0: float = 0.5,
    decay: float = 0.95,
) -> float:
    """Interpolated action plus decaying zero-mean uniform exploration noise.

    Before any support has been initialized the nearest support's random
    initial action serves as the base.
    """
    if pmap.initialized.any():
        base = interpolate_action(pmap, state)
    else:
        base = float(pmap.actions[pmap.nearest_index(state)])
    if eps0 <= 0:
        return bounds.clip(base)
    half = eps0 * decay**episode_index * bounds.span
    return bounds.clip(base + rng.uniform(-half, half))


def save_maps(path, maps: dict[str, PerformanceMap]):
    """Persist maps as a flat text table, one row per support."""
    with open(path, "w") as fh:
        fh.write("# ebgtune performance maps v1\n")
        for name, m in maps.items():
            fh.write(f"# map {name}\n")
            fh.write("# resolution " + " ".join(str(r) for r in m.resolution) + "\n")
            fh.write(
                "# ranges "
                + " ".join(f"{float(lo)!r}:{float(hi)!r}" for lo, hi in m.state_ranges)
                + "\n"
            )
            fh.write(f"# bounds {float(m.bounds.min)!r} {float(m.bounds.max)!r}\n")
            fh.write(f"# gamma_map {m.gamma_map!r}\n")
            shape = m.resolution
            for lin in range(m.n_supports):
                idx = np.unravel_index(lin, shape)
                phys = m.state_ranges[:, 0] + m.coords[lin] * (
                    m.state_ranges[:, 1] - m.state_ranges[:, 0]
                )
                row = (
                    [str(i) for i in idx]
                    + [repr(float(v)) for v in phys]
                    + [
                        repr(float(m.actions[lin])),
                        repr(float(m.utilities[lin])),
                        str(int(m.initialized[lin])),
                    ]
                )
                fh.write(" ".join(row) + "\n")


def load_maps(path) -> dict[str, PerformanceMap]:
    maps: dict[str, PerformanceMap] = {}
    name = None
    meta: dict = {}
    rows: list[list[str]] = []

    def flush():
        if name is None:
            return
        resolution = tuple(meta["resolution"])
        ranges = np.asarray(meta["ranges"], dtype=float)
        bounds = ActionBounds(*meta["bounds"])
        m = init_map(ranges, resolution, bounds, seed=0, gamma_map=meta["gamma_map"])
        n_dims = len(resolution)
        for parts in rows:
            idx = tuple(int(p) for p in parts[:n_dims])
            lin = int(np.ravel_multi_index(idx, resolution))
            m.actions[lin] = float(parts[2 * n_dims])
            m.utilities[lin] = float(parts[2 * n_dims + 1])
            m.initialized[lin] = bool(int(parts[2 * n_dims + 2]))
        maps[name] = m

    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if not parts:
                    continue
                key = parts[0]
                if key == "map":
                    flush()
                    name = parts[1]
                    meta = {}
                    rows = []
                elif key == "resolution":
                    meta["resolution"] = [int(p) for p in parts[1:]]
                elif key == "ranges":
                    meta["ranges"] = [
                        [float(x) for x in p.split(":")] for p in parts[1:]
                    ]
                elif key == "bounds":
                    meta["bounds"] = (float(parts[1]), float(parts[2]))
                elif key == "gamma_map":
                    meta["gamma_map"] = float(parts[1])
            else:
                rows.append(line.split())
    flush()
    if not maps:
        raise ConfigError(f"no performance maps found in {path}")
    return maps
