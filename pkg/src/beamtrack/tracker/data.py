"""Ground-truth labeling, scene encoding and sliding-window sample assembly."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..codebook import Codebook, dft_codebook, single_antenna_codebook, sweep
from ..encoders import BS_MARK, RX_START, TX_MARK, UE_MARK, GridSpec, coord_matrix, virtual_lidar, voxelize
from ..mimo import ArrayConfig, build_channel
from ..scene import Episode, Scene

log = logging.getLogger(__name__)

# value used to scale int8 grids into [-1, 1]
INPUT_SCALE = {"lidar": 3.0, "gnss": 10.0}
# (receiver, transmitter) marker codes of each encoding, before scaling
MARKERS = {"lidar": (UE_MARK, BS_MARK), "gnss": (RX_START, TX_MARK)}


@dataclass(frozen=True)
class GridPreset:
    voxel: GridSpec
    coord: GridSpec
    lidar_azimuths: int = 720
    lidar_elevations: int = 16
    lidar_range: float = 120.0


GRID_PRESETS = {
    "urban_canyon": GridPreset(
        GridSpec((0.0, 0.0, 0.0), 1.0, (20, 200, 10)),
        GridSpec((0.0, 0.0), 1.0, (20, 200)),
    ),
    "roundabout": GridPreset(
        GridSpec((0.0, 0.0, 0.0), 1.0, (64, 64, 8)),
        GridSpec((0.0, 0.0), 1.0, (64, 64)),
    ),
}


@dataclass(frozen=True)
class Labeler:
    ct: Codebook
    cr: Codebook
    pair_mode: bool = False

    @classmethod
    def default(cls, n_tx: int = 64, n_beams: int = 64, n_rx: int = 1, pair_mode: bool = False) -> "Labeler":
        cr = single_antenna_codebook() if n_rx == 1 else dft_codebook(n_rx, n_rx, "receiver")
        return cls(dft_codebook(n_tx, n_beams), cr, pair_mode)

    @property
    def n_labels(self) -> int:
        return self.ct.size * self.cr.size if self.pair_mode else self.ct.size


def label_rays(rays, labeler: Labeler) -> tuple[int, float] | None:
    """Best beam index and its gain, or None for an outage."""
    if not rays:
        return None
    H = build_channel(rays, ArrayConfig(labeler.ct.n_antennas), ArrayConfig(labeler.cr.n_antennas))
    res = sweep(H, labeler.ct, labeler.cr)
    idx = res.best_flat if labeler.pair_mode else res.best_pair[0]
    return idx, res.best_gain


def label_scene(scene: Scene, receiver_id: int, labeler: Labeler) -> int | None:
    """Optimal beam index for one receiver; None (logged) when the scene is an outage."""
    out = label_rays(scene.per_receiver_rays[receiver_id], labeler)
    if out is None:
        log.info("scene %d receiver %d: outage, excluded", scene.scene_id, receiver_id)
        return None
    return out[0]


def label_episode(episode: Episode, labeler: Labeler) -> dict[int, list]:
    """receiver id -> per-scene list of (beam, gain) or None."""
    return {
        r: [label_rays(s.per_receiver_rays[r], labeler) for s in episode.scenes]
        for r in episode.receiver_ids
    }


def encode_episode(episode: Episode, mode: str, preset: GridPreset, gradient_len: int = 4) -> np.ndarray:
    """int8 array (R, S, *grid) of encoded scenes for every receiver.

    LIDAR clouds come from a sensor at the receiver's serving BS.
    """
    sc = episode.scenario
    R, S = len(episode.receiver_ids), len(episode.scenes)
    grid = preset.voxel if mode == "lidar" else preset.coord
    out = np.zeros((R, S) + grid.dims, dtype=np.int8)
    for j, scene in enumerate(episode.scenes):
        clouds = {}
        for i, r in enumerate(episode.receiver_ids):
            rx = scene.vehicle(r)
            b = scene.serving_bs[r]
            bs = sc.bs_positions[b]
            if mode == "lidar":
                if b not in clouds:
                    clouds[b] = virtual_lidar(sc, scene.vehicles, bs + (sc.bs_boresights[b],),
                                              preset.lidar_azimuths, preset.lidar_elevations, preset.lidar_range)
                out[i, j] = voxelize(clouds[b], grid, bs, rx.antenna)
            else:
                out[i, j] = coord_matrix(sc, scene.vehicles, grid, bs, rx, gradient_len)
    return out


def to_network_input(grids: np.ndarray, mode: str) -> np.ndarray:
    """(..., X, Y, Z) voxels -> (..., Z, X, Y); (..., X, Y) matrices -> (..., 1, X, Y); scaled to [-1, 1]."""
    g = np.asarray(grids, dtype=np.float64) / INPUT_SCALE[mode]
    if mode == "lidar":
        return np.moveaxis(g, -1, -3)
    return g[..., None, :, :]


@dataclass(frozen=True)
class TrackingSample:
    scene_tensor: np.ndarray
    prev_beams: tuple[int, ...]
    label: int
    episode_id: int
    scene_id: int
    receiver_id: int = 0


def window_indices(labels: Sequence[int | None], window: int) -> list[int]:
    """Scenes t >= window whose label and ``window`` predecessors are all present."""
    return [
        t for t in range(window, len(labels))
        if all(labels[k] is not None for k in range(t - window, t + 1))
    ]


def build_samples(episode_id: int, tensors: Sequence[np.ndarray], labels: Sequence[int | None],
                  window: int, receiver_id: int = 0) -> list[TrackingSample]:
    """Sliding windows over one receiver's scene sequence; never crosses an outage."""
    return [
        TrackingSample(tensors[t], tuple(int(b) for b in labels[t - window : t]), int(labels[t]),
                       episode_id, t, receiver_id)
        for t in window_indices(labels, window)
    ]


@dataclass
class SampleSet:
    """Column-wise storage of tracking samples; ``grids`` keeps the raw int8 encoding."""

    grids: np.ndarray
    prev: np.ndarray
    labels: np.ndarray
    episode_ids: np.ndarray
    scene_ids: np.ndarray
    receiver_ids: np.ndarray
    mode: str

    def __len__(self):
        return len(self.labels)

    def subset(self, mask) -> "SampleSet":
        return SampleSet(self.grids[mask], self.prev[mask], self.labels[mask], self.episode_ids[mask],
                         self.scene_ids[mask], self.receiver_ids[mask], self.mode)

    def inputs(self, idx=slice(None)) -> np.ndarray:
        return to_network_input(self.grids[idx], self.mode)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return to_network_input(self.grids[:1], self.mode).shape[1:] if len(self) else ()

    @classmethod
    def assemble(cls, encoded: dict, labels: dict, window: int, mode: str) -> "SampleSet":
        """``encoded[ep]`` is (R, S, *grid); ``labels[ep][r]`` a per-scene list of beam or None."""
        rows = []
        for ep in sorted(encoded):
            grids = encoded[ep]
            for i, r in enumerate(sorted(labels[ep])):
                seq = labels[ep][r]
                for t in window_indices(seq, window):
                    rows.append((ep, i, r, t, seq[t - window : t], seq[t]))
        if not rows:
            raise ValueError("no complete windows in the dataset")
        g0 = next(iter(encoded.values()))
        grids = np.zeros((len(rows),) + g0.shape[2:], dtype=np.int8)
        for n, (ep, i, r, t, _, _) in enumerate(rows):
            grids[n] = encoded[ep][i, t]
        return cls(
            grids,
            np.array([row[4] for row in rows], dtype=np.int64),
            np.array([row[5] for row in rows], dtype=np.int64),
            np.array([row[0] for row in rows], dtype=np.int64),
            np.array([row[3] for row in rows], dtype=np.int64),
            np.array([row[2] for row in rows], dtype=np.int64),
            mode,
        )
