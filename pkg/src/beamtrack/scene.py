"""Synthetic V2I episodes: scenario geometry, vehicle kinematics and ray synthesis.

World frame: x/y on the ground plane, z up, meters. A BS array is a ULA
whose boresight lies in the ground plane at azimuth ``boresight``; its axis
is the boresight rotated by +90 degrees. Vehicles carry their array along
their heading.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConstructionError, DomainError, SimulationError
from .geometry import Box, los_blocked, unit
from .mimo import RayPath

SPEED_OF_LIGHT = 299_792_458.0
KMH = 1000.0 / 3600.0

CAR_SIZE = (4.5, 1.8, 1.5)
TRUCK_SIZE = (8.0, 2.5, 3.2)
ANTENNA_CLEARANCE = 0.05  # receiver antenna height above the roof


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class StraightPath:
    start: tuple[float, float]
    direction: tuple[float, float]
    length: float

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        n = float(np.hypot(*d))
        if n == 0 or self.length <= 0:
            raise ConstructionError("straight path needs a direction and positive length")
        object.__setattr__(self, "direction", (float(d[0] / n), float(d[1] / n)))
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))

    def contains(self, s: float) -> bool:
        return 0.0 <= s <= self.length

    def pose(self, s: float) -> tuple[np.ndarray, float]:
        d = np.array(self.direction)
        xy = np.array(self.start) + d * s
        return xy, math.atan2(d[1], d[0])

    def sample(self, n: int = 64) -> np.ndarray:
        return np.array([self.pose(s)[0] for s in np.linspace(0.0, self.length, n)])


@dataclass(frozen=True)
class RingPath:
    center: tuple[float, float]
    radius: float
    ccw: bool = True

    def __post_init__(self):
        if self.radius <= 0:
            raise ConstructionError("ring radius must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def length(self) -> float:
        return 2 * math.pi * self.radius

    def contains(self, s: float) -> bool:
        return True

    def pose(self, s: float) -> tuple[np.ndarray, float]:
        sign = 1.0 if self.ccw else -1.0
        phi = sign * s / self.radius
        xy = np.array(self.center) + self.radius * np.array([math.cos(phi), math.sin(phi)])
        heading = phi + sign * math.pi / 2
        return xy, math.atan2(math.sin(heading), math.cos(heading))

    def sample(self, n: int = 256) -> np.ndarray:
        return np.array([self.pose(s)[0] for s in np.linspace(0.0, self.length, n, endpoint=False)])


Path = Union[StraightPath, RingPath]


@dataclass(frozen=True)
class Zone:
    """Arc-length window [s_lo, s_hi] on one path used for spawning."""

    path: int
    s_lo: float
    s_hi: float


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class Scenario:
    kind: str
    buildings: tuple[Box, ...]
    bs_positions: tuple[tuple[float, float, float], ...]
    bs_boresights: tuple[float, ...]
    paths: tuple[Path, ...]
    rx_zones: tuple[Zone, ...]
    traffic_zones: tuple[Zone, ...]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    speed_range: tuple[float, float]
    carrier_frequency: float = 28e9
    lane_width: float = 3.5
    n_traffic: int = 4
    reflection_coeff: float = 0.3
    max_rays: int = 8

    def __post_init__(self):
        if not self.bs_positions:
            raise ConstructionError("scenario needs at least one BS")
        if len(self.bs_boresights) != len(self.bs_positions):
            raise ConstructionError("one boresight per BS required")
        lo, hi = self.speed_range
        if not (0.0 <= lo <= hi) or hi > 100.0:
            raise ConstructionError(f"invalid speed range {self.speed_range}")
        if self.carrier_frequency <= 0:
            raise ConstructionError("carrier frequency must be positive")
        for z in self.rx_zones + self.traffic_zones:
            if not (0 <= z.path < len(self.paths)) or z.s_hi < z.s_lo:
                raise ConstructionError(f"bad spawn zone {z}")
        half = self.lane_width / 2
        for i, path in enumerate(self.paths):
            pts = path.sample()
            for b in self.buildings:
                inside = (
                    (pts[:, 0] > b.lo[0] - half) & (pts[:, 0] < b.hi[0] + half)
                    & (pts[:, 1] > b.lo[1] - half) & (pts[:, 1] < b.hi[1] + half)
                )
                if inside.any():
                    raise ConstructionError(f"lane {i} intersects building {b}")
        for p in self.bs_positions:
            if any(b.contains(p, strict=False) for b in self.buildings):
                raise ConstructionError(f"BS at {p} is inside a building")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def max_speed(self) -> float:
        return self.speed_range[1]

    def in_bounds(self, xy) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= xy[0] < x1 and y0 <= xy[1] < y1

    def with_speed_range(self, lo: float, hi: float) -> "Scenario":
        return _replace(self, speed_range=(lo, hi))


def _replace(obj, **changes):
    from dataclasses import replace

    return replace(obj, **changes)


def make_scenario(kind: str, **params) -> Scenario:
    if kind == "urban_canyon":
        return _urban_canyon(**params)
    if kind == "roundabout":
        return _roundabout(**params)
    raise ConstructionError(f"unknown scenario kind {kind!r}")


def _urban_canyon(
    length: float = 200.0,
    road_lo: float = 0.5,
    road_hi: float = 19.5,
    lane_x: Sequence[float] = (7.5, 12.5),
    bs_positions: Sequence[Sequence[float]] = ((2.0, 70.0, 6.0), (18.0, 130.0, 6.0)),
    block_edges: Sequence[float] = (0.0, 35.0, 45.0, 95.0, 105.0, 150.0, 160.0, 200.0),
    heights_left: Sequence[float] = (24.0, 40.0, 18.0, 30.0),
    heights_right: Sequence[float] = (30.0, 22.0, 36.0, 20.0),
    building_depth: float = 20.0,
    speed_range: tuple[float, float] = (20 * KMH, 60 * KMH),
    rx_window: float = 25.0,
    traffic_window: float = 45.0,
    **extra,
) -> Scenario:
    """Straight two-lane street between two rows of buildings, one BS per sidewalk."""
    buildings = []
    blocks = list(zip(block_edges[0::2], block_edges[1::2]))
    for (y0, y1), h in zip(blocks, heights_left):
        buildings.append(Box((road_lo - building_depth, y0, 0.0), (road_lo, y1, h)))
    for (y0, y1), h in zip(blocks, heights_right):
        buildings.append(Box((road_hi, y0, 0.0), (road_hi + building_depth, y1, h)))
    # lane 0 heads +y, lane 1 heads -y
    paths = (
        StraightPath((lane_x[0], 0.0), (0.0, 1.0), length),
        StraightPath((lane_x[1], length), (0.0, -1.0), length),
    )
    rx_zones, traffic_zones = [], []
    for bs in bs_positions:
        y = bs[1]
        for i in range(2):
            # arc length along lane 1 runs opposite to y
            s = y if i == 0 else length - y
            rx_zones.append(Zone(i, max(0.0, s - rx_window), min(length, s + rx_window)))
            traffic_zones.append(Zone(i, max(0.0, s - traffic_window), min(length, s + traffic_window)))
    mid = (road_lo + road_hi) / 2
    boresights = tuple(0.0 if bs[0] < mid else math.pi for bs in bs_positions)
    return Scenario(
        kind="urban_canyon",
        buildings=tuple(buildings),
        bs_positions=tuple(tuple(float(v) for v in p) for p in bs_positions),
        bs_boresights=boresights,
        paths=paths,
        rx_zones=tuple(rx_zones),
        traffic_zones=tuple(traffic_zones),
        bounds=(0.0, 0.0, 20.0, length),
        speed_range=tuple(speed_range),
        **extra,
    )


def _roundabout(
    size: float = 64.0,
    ring_radius: float = 13.0,
    island_half: float = 6.0,
    arm_half_width: float = 13.0,
    lane_offset: float = 2.5,
    corner_heights: Sequence[float] = (18.0, 26.0, 14.0, 30.0),
    bs_position: Sequence[float] = (43.5, 43.5, 6.0),
    speed_range: tuple[float, float] = (20 * KMH, 60 * KMH),
    travel_margin: float = 7.5,
    **extra,
) -> Scenario:
    """Circular ring with four straight arms and one BS at a corner."""
    c = size / 2
    b0, b1 = c - arm_half_width, c + arm_half_width
    corners = [((0.0, 0.0), (b0, b0)), ((b1, 0.0), (size, b0)), ((0.0, b1), (b0, size)), ((b1, b1), (size, size))]
    buildings = [Box((x0, y0, 0.0), (x1, y1, h)) for ((x0, y0), (x1, y1)), h in zip(corners, corner_heights)]
    buildings.append(Box((c - island_half, c - island_half, 0.0), (c + island_half, c + island_half, 0.8)))

    paths: list[Path] = [RingPath((c, c), ring_radius, ccw=True)]
    approach_len = c - math.sqrt(ring_radius**2 - lane_offset**2)
    rx_zones = [Zone(0, 0.0, paths[0].length)]
    # arms: inbound lane on the right of the arm axis (right-hand traffic)
    for ax, ay in ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)):
        nx, ny = -ay, ax  # left normal of the outward axis
        edge = (c + ax * c, c + ay * c)
        inbound_start = (edge[0] + nx * lane_offset, edge[1] + ny * lane_offset)
        outbound_start = (c + ax * (c - approach_len) - nx * lane_offset, c + ay * (c - approach_len) - ny * lane_offset)
        # spawn far enough from the lane end to stay on it for a whole episode
        for start, direction in ((inbound_start, (-ax, -ay)), (outbound_start, (ax, ay))):
            paths.append(StraightPath(start, direction, approach_len))
            rx_zones.append(Zone(len(paths) - 1, 0.5, approach_len - travel_margin))
    boresight = math.atan2(c - bs_position[1], c - bs_position[0])
    return Scenario(
        kind="roundabout",
        buildings=tuple(buildings),
        bs_positions=(tuple(float(v) for v in bs_position),),
        bs_boresights=(boresight,),
        paths=tuple(paths),
        rx_zones=tuple(rx_zones),
        traffic_zones=tuple(rx_zones),
        bounds=(0.0, 0.0, size, size),
        speed_range=tuple(speed_range),
        **extra,
    )


# ---------------------------------------------------------------------------
# vehicles and scenes


@dataclass(frozen=True)
class VehicleState:
    vehicle_id: int
    position: tuple[float, float, float]  # footprint center on the ground
    velocity: tuple[float, float, float]
    heading: float
    bbox: tuple[float, float, float]  # length, width, height
    is_receiver: bool = False

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    @property
    def antenna(self) -> np.ndarray:
        x, y, _ = self.position
        return np.array([x, y, self.bbox[2] + ANTENNA_CLEARANCE])

    def box(self) -> Box:
        length, width, height = self.bbox
        c, s = abs(math.cos(self.heading)), abs(math.sin(self.heading))
        hx = 0.5 * (length * c + width * s)
        hy = 0.5 * (length * s + width * c)
        x, y, z = self.position
        return Box((x - hx, y - hy, z), (x + hx, y + hy, z + height))


@dataclass(frozen=True)
class Scene:
    scene_id: int
    t_ms: float
    vehicles: tuple[VehicleState, ...]
    per_receiver_rays: dict  # vehicle_id -> list[RayPath]
    serving_bs: dict  # vehicle_id -> BS index

    @property
    def receivers(self) -> list[VehicleState]:
        return [v for v in self.vehicles if v.is_receiver]

    def vehicle(self, vehicle_id: int) -> VehicleState:
        for v in self.vehicles:
            if v.vehicle_id == vehicle_id:
                return v
        raise KeyError(vehicle_id)


@dataclass(frozen=True)
class Episode:
    episode_id: int
    scenario: Scenario
    scenes: tuple[Scene, ...]
    scene_interval_ms: float = 20.0
    receiver_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for k, s in enumerate(self.scenes):
            if s.scene_id != k or s.t_ms != k * self.scene_interval_ms:
                raise SimulationError("scenes must be consecutive with a constant interval")


@dataclass(frozen=True)
class _Mover:
    vehicle_id: int
    path: int
    s0: float
    speed: float
    bbox: tuple[float, float, float]
    is_receiver: bool

    def state(self, scenario: Scenario, t: float) -> VehicleState | None:
        path = scenario.paths[self.path]
        s = self.s0 + self.speed * t
        if not path.contains(s):
            return None
        xy, heading = path.pose(s)
        if not scenario.in_bounds(xy):
            return None
        vel = (self.speed * math.cos(heading), self.speed * math.sin(heading), 0.0)
        return VehicleState(
            self.vehicle_id, (float(xy[0]), float(xy[1]), 0.0), vel, heading, self.bbox, self.is_receiver
        )


# ---------------------------------------------------------------------------
# rays


def _local_angles(direction: np.ndarray, boresight: float) -> tuple[float, float]:
    b = np.array([math.cos(boresight), math.sin(boresight), 0.0])
    u = np.array([-math.sin(boresight), math.cos(boresight), 0.0])
    az = math.atan2(float(direction @ u), float(direction @ b))
    el = math.asin(max(-1.0, min(1.0, float(direction[2]))))
    return az, el


def _facades(box: Box):
    """Vertical faces as (axis, plane, outward sign)."""
    for axis in (0, 1):
        yield axis, box.lo[axis], -1.0
        yield axis, box.hi[axis], 1.0


def trace_paths(
    tx_pos,
    tx_boresight: float,
    rx_pos,
    rx_boresight: float,
    buildings: Sequence[Box],
    blockers: Sequence[Box] = (),
    wavelength: float = SPEED_OF_LIGHT / 28e9,
    reflection_coeff: float = 0.3,
    max_rays: int = 8,
) -> list[RayPath]:
    """LOS plus first-order specular reflections off building facades.

    Rays are sorted by |gain| descending and truncated to ``max_rays``.
    """
    tx = np.asarray(tx_pos, float)
    rx = np.asarray(rx_pos, float)
    if np.linalg.norm(rx - tx) < 1e-9:
        raise DomainError("transmitter and receiver coincide")
    obstacles = list(buildings) + list(blockers)
    k = 2 * math.pi / wavelength
    found = []  # (sort key, ray)

    def add(length: float, coeff: float, first_leg: np.ndarray, last_leg: np.ndarray, order: int):
        amp = coeff * wavelength / (4 * math.pi * length)
        gain = amp * complex(math.cos(k * length), -math.sin(k * length))
        aod = _local_angles(unit(first_leg), tx_boresight)
        aoa = _local_angles(unit(last_leg), rx_boresight)
        ray = RayPath(gain, aod[0], aod[1], aoa[0], aoa[1], length / SPEED_OF_LIGHT)
        found.append(((-abs(gain), order), ray))

    if not los_blocked(tx, rx, obstacles):
        d = float(np.linalg.norm(rx - tx))
        add(d, 1.0, rx - tx, tx - rx, 0)

    order = 1
    for box in buildings:
        for axis, plane, sign in _facades(box):
            order += 1
            if sign * (tx[axis] - plane) <= 0 or sign * (rx[axis] - plane) <= 0:
                continue
            image = tx.copy()
            image[axis] = 2 * plane - tx[axis]
            t = (plane - image[axis]) / (rx[axis] - image[axis])
            p = image + t * (rx - image)
            p[axis] = plane
            other = 1 - axis
            if not (box.lo[other] <= p[other] <= box.hi[other] and box.lo[2] <= p[2] <= box.hi[2]):
                continue
            if los_blocked(tx, p, obstacles) or los_blocked(p, rx, obstacles):
                continue
            length = float(np.linalg.norm(rx - image))
            add(length, reflection_coeff, p - tx, p - rx, order)

    found.sort(key=lambda item: item[0])
    return [ray for _, ray in found[:max_rays]]


def synthesize_rays(scenario: Scenario, scene_vehicles: Sequence[VehicleState], bs_index: int, rx: VehicleState) -> list[RayPath]:
    """Rays from BS ``bs_index`` to receiver ``rx``; other vehicles block."""
    blockers = [v.box() for v in scene_vehicles if v.vehicle_id != rx.vehicle_id]
    return trace_paths(
        scenario.bs_positions[bs_index],
        scenario.bs_boresights[bs_index],
        rx.antenna,
        rx.heading,
        scenario.buildings,
        blockers,
        scenario.wavelength,
        scenario.reflection_coeff,
        scenario.max_rays,
    )


# ---------------------------------------------------------------------------
# episodes


def _spawn(scenario: Scenario, rng: np.random.Generator, zones, bbox, movers, speed, is_receiver, vid):
    for _ in range(100):
        zone = zones[int(rng.integers(len(zones)))]
        s0 = float(rng.uniform(zone.s_lo, zone.s_hi))
        cand = _Mover(vid, zone.path, s0, speed, bbox, is_receiver)
        state = cand.state(scenario, 0.0)
        if state is None:
            continue
        box = state.box()
        clash = False
        for m in movers:
            other = m.state(scenario, 0.0)
            if other is not None and other.box().footprint_overlaps(box, margin=1.0):
                clash = True
                break
        if not clash:
            return cand
    raise SimulationError("could not place a vehicle without overlap")


def simulate_episode(
    scenario: Scenario,
    n_scenes: int,
    n_receivers: int,
    seed: int,
    *,
    episode_id: int = 0,
    scene_interval_ms: float = 20.0,
    n_traffic: int | None = None,
) -> Episode:
    """Spawn vehicles, advance them at constant speed and trace rays per scene.

    If a receiver leaves the scenario the episode is cut at the last scene
    where every receiver was still valid.
    """
    if n_scenes < 2:
        raise SimulationError("an episode needs at least 2 scenes")
    if n_receivers < 1:
        raise SimulationError("an episode needs at least one receiver")
    rng = np.random.default_rng([seed, episode_id])
    n_traffic = scenario.n_traffic if n_traffic is None else n_traffic
    lo, hi = scenario.speed_range

    movers: list[_Mover] = []
    for i in range(n_receivers):
        speed = float(rng.uniform(lo, hi))
        movers.append(_spawn(scenario, rng, scenario.rx_zones, CAR_SIZE, movers, speed, True, i))
    for j in range(n_traffic):
        speed = float(rng.uniform(lo, hi))
        size = TRUCK_SIZE if rng.random() < 0.5 else CAR_SIZE
        movers.append(_spawn(scenario, rng, scenario.traffic_zones, size, movers, speed, False, n_receivers + j))

    receiver_ids = tuple(range(n_receivers))
    serving: dict[int, int] = {}
    scenes = []
    dt = scene_interval_ms / 1000.0
    for k in range(n_scenes):
        t = k * dt
        states = [m.state(scenario, t) for m in movers]
        if any(states[i] is None for i in range(n_receivers)):
            break
        vehicles = tuple(s for s in states if s is not None)
        if not serving:
            for i in receiver_ids:
                ant = states[i].antenna
                dists = [np.linalg.norm(ant - np.array(p)) for p in scenario.bs_positions]
                serving[i] = int(np.argmin(dists))
        rays = {i: synthesize_rays(scenario, vehicles, serving[i], states[i]) for i in receiver_ids}
        scenes.append(Scene(k, k * scene_interval_ms, vehicles, rays, dict(serving)))
    if len(scenes) < 2:
        raise SimulationError(f"episode {episode_id}: receiver left the scenario before scene 2")
    return Episode(episode_id, scenario, tuple(scenes), scene_interval_ms, receiver_ids)


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str
    n_scenes: int
    n_receivers: int
    n_episodes: int


PRESETS = {
    "t001": Preset("t001", "urban_canyon", 10, 2, 200),
    "t002": Preset("t002", "roundabout", 20, 5, 100),
}


def generate_episodes(
    scenario: Scenario, preset: Preset, n_episodes: int, seed: int, static: bool = False
) -> list[Episode]:
    """Generate ``n_episodes`` episodes; ``static`` freezes every vehicle."""
    if static:
        scenario = scenario.with_speed_range(0.0, 0.0)
    episodes = []
    for e in range(n_episodes):
        for attempt in range(20):
            try:
                ep = simulate_episode(
                    scenario, preset.n_scenes, preset.n_receivers, seed + 7919 * attempt, episode_id=e
                )
            except SimulationError:
                continue
            episodes.append(ep)
            break
        else:
            raise SimulationError(f"episode {e} failed after 20 attempts")
    return episodes
