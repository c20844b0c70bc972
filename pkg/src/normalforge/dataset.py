"""Frame containers and the on-disk dataset layout.

A dataset directory holds one ``intrinsics.json`` plus, per frame,
``<frame>_depth.pfm``, ``<frame>_gt.pfm`` (3-channel) and ``<frame>_pose.json``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from . import io
from .core import CameraIntrinsics, DepthImage, EmptyInputError, NormalMap
from .synth import NoiseSpec, Pose, TriangleMesh, add_gaussian_noise, noise_sigma, render_depth


@dataclass
class Frame:
    name: str
    depth: DepthImage
    gt: NormalMap
    intrinsics: CameraIntrinsics
    pose: Optional[Pose] = None


class InMemoryDataset:
    def __init__(self, frames: Sequence[Frame], name: str = "memory"):
        self.frames = {f.name: f for f in frames}
        self.name = name

    def frame_names(self) -> List[str]:
        return list(self.frames)

    def load(self, name: str) -> Frame:
        return self.frames[name]


class DirectoryDataset:
    """Lazy reader for the directory layout described in the module docstring."""

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"dataset directory {self.root} does not exist")
        self.name = self.root.name
        self.intrinsics = io.read_intrinsics_json(self.root / "intrinsics.json")

    def frame_names(self) -> List[str]:
        return sorted(p.name[: -len("_depth.pfm")] for p in self.root.glob("*_depth.pfm"))

    def load(self, name: str) -> Frame:
        depth = io.read_depth_pfm(self.root / f"{name}_depth.pfm")
        gt = io.read_normals_pfm(self.root / f"{name}_gt.pfm")
        pose_path = self.root / f"{name}_pose.json"
        pose = Pose.from_dict(json.loads(pose_path.read_text())) if pose_path.exists() else None
        return Frame(name, depth, gt, self.intrinsics, pose)


def frame_name(i: int) -> str:
    return f"{i:06d}"


def generate_frames(mesh: TriangleMesh, K: CameraIntrinsics, poses: Sequence[Pose], width: int,
                    height: int, noise: Optional[str] = None, sigma: Optional[float] = None,
                    seed: int = 0, threads: int = 1) -> List[Frame]:
    """Render one frame per pose, optionally adding noise.

    ``noise`` names a relative preset; ``sigma`` gives an absolute value and
    wins when both are set. Frame ``i`` uses noise seed ``seed + i``.
    """

    def one(i):
        depth, gt = render_depth(mesh, K, poses[i], width, height)
        s = sigma if sigma is not None else (noise_sigma(noise, depth) if noise else 0.0)
        if s > 0:
            depth = add_gaussian_noise(depth, NoiseSpec(s, seed + i))
        if not depth.mask.any():
            raise EmptyInputError(f"view {i} does not see the object")
        return Frame(frame_name(i), depth, gt, K, poses[i])

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(one, range(len(poses))))


def write_dataset(frames: Sequence[Frame], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if frames:
        io.write_intrinsics_json(out / "intrinsics.json", frames[0].intrinsics)
    for f in frames:
        io.write_scalar_pfm(out / f"{f.name}_depth.pfm", f.depth)
        io.write_normals_pfm(out / f"{f.name}_gt.pfm", f.gt)
        if f.pose is not None:
            io.write_json(out / f"{f.name}_pose.json", f.pose.to_dict())
    return out
