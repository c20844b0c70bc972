"""Angular-error metrics, error maps and the timing/benchmark harness."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .core import EmptyInputError, InvalidInputError, NormalMap, ScalarImage

DEFAULT_PHIS = (10.0, 20.0, 30.0)


def angular_errors(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise angle in degrees between two N x 3 arrays of non-zero vectors.

    Uses ``atan2(|a x b|, a . b)``, which equals the clamped arccos of the
    normalised dot product but keeps full precision near 0 and 180 degrees.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def angular_error(n, n_hat) -> float:
    """Angle between two non-zero 3-vectors, in degrees."""
    a = np.asarray(n, dtype=np.float64)
    b = np.asarray(n_hat, dtype=np.float64)
    if a.shape != (3,) or b.shape != (3,):
        raise InvalidInputError("angular_error expects two 3-vectors")
    if not (np.linalg.norm(a) > 0 and np.linalg.norm(b) > 0):
        raise InvalidInputError("angular_error is undefined for zero-norm vectors")
    return float(angular_errors(a, b))


def _as_errors(errors) -> np.ndarray:
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise EmptyInputError("metric needs at least one error value")
    return e


def aae(errors: Iterable[float]) -> float:
    """Average angular error in degrees."""
    return float(np.mean(_as_errors(errors)))


def pgp(errors: Iterable[float], phi: float) -> float:
    """Proportion of errors at or below ``phi`` degrees."""
    if not phi >= 0:
        raise InvalidInputError(f"phi must be >= 0, got {phi}")
    e = _as_errors(errors)
    return float(np.count_nonzero(e <= phi)) / e.size


def pi_score(e_a: float, t_ms: float) -> float:
    """Speed/accuracy trade-off ``e_A * t`` in degrees per kilohertz."""
    if not t_ms >= 0:
        raise InvalidInputError(f"time must be >= 0, got {t_ms}")
    return float(e_a) * float(t_ms)


def evaluation_mask(pred: NormalMap, gt: NormalMap) -> np.ndarray:
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    mask = pred.mask & gt.mask
    mask[0, :] = mask[-1, :] = False
    mask[:, 0] = mask[:, -1] = False
    return mask


def error_map(pred: NormalMap, gt: NormalMap) -> ScalarImage:
    """Per-pixel angular error; valid where both maps are valid, excluding the border."""
    mask = evaluation_mask(pred, gt)
    out = np.full(pred.shape, np.nan)
    out[mask] = angular_errors(pred.normals[mask], gt.normals[mask])
    return ScalarImage(out, mask)


# ---------------------------------------------------------------------------
# reports


@dataclass
class FrameResult:
    frame: str
    e_A: float = math.nan
    e_P: Dict[float, float] = field(default_factory=dict)
    m: int = 0
    t: float = math.nan
    error: Optional[str] = None

    def to_dict(self):
        return {"frame": self.frame, "e_A": self.e_A, "e_P": {str(k): v for k, v in self.e_P.items()},
                "m": self.m, "t": self.t, "error": self.error}

    @classmethod
    def from_dict(cls, d):
        return cls(d["frame"], d["e_A"], {float(k): v for k, v in d["e_P"].items()}, d["m"], d["t"], d.get("error"))


@dataclass
class EvalReport:
    """Pooled metrics plus a per-frame breakdown.

    ``e_A`` and ``e_P`` pool all evaluated pixels of all frames; ``t`` is the
    median of per-frame times in milliseconds; ``pi = e_A * t``.
    """

    method: str
    dataset: str
    e_A: float
    e_P: Dict[float, float]
    m: int
    t: float
    pi: float
    frames: List[FrameResult] = field(default_factory=list)

    @property
    def frame_mean_e_A(self) -> float:
        """Unweighted mean of per-frame AAEs (the non-pooled convention)."""
        vals = [f.e_A for f in self.frames if f.error is None and f.m > 0]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def failed_frames(self) -> List[str]:
        return [f.frame for f in self.frames if f.error is not None]

    def to_dict(self):
        return {"method": self.method, "dataset": self.dataset, "e_A": self.e_A,
                "e_P": {str(k): v for k, v in self.e_P.items()}, "m": self.m, "t": self.t,
                "pi": self.pi, "frames": [f.to_dict() for f in self.frames]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["method"], d["dataset"], d["e_A"], {float(k): v for k, v in d["e_P"].items()},
                   d["m"], d["t"], d["pi"], [FrameResult.from_dict(f) for f in d.get("frames", [])])


def summarize(errors_per_frame: Sequence[np.ndarray], names: Sequence[str], times: Sequence[float],
              phis=DEFAULT_PHIS, method: str = "", dataset: str = "",
              failures: Optional[Dict[str, str]] = None) -> EvalReport:
    """Pool per-frame error arrays into an :class:`EvalReport`."""
    phis = [float(p) for p in phis]
    frames = []
    for name, e, t in zip(names, errors_per_frame, times):
        if e.size:
            frames.append(FrameResult(name, aae(e), {p: pgp(e, p) for p in phis}, int(e.size), float(t)))
        else:
            frames.append(FrameResult(name, math.nan, {p: math.nan for p in phis}, 0, float(t)))
    for name, msg in (failures or {}).items():
        frames.append(FrameResult(name, error=msg))
    pooled = np.concatenate([e for e in errors_per_frame]) if errors_per_frame else np.empty(0)
    if pooled.size:
        e_a = aae(pooled)
        e_p = {p: pgp(pooled, p) for p in phis}
    else:
        e_a = math.nan
        e_p = {p: math.nan for p in phis}
    t_med = float(np.median(times)) if len(times) else math.nan
    pi = pi_score(e_a, t_med) if math.isfinite(t_med) else math.nan
    return EvalReport(method, dataset, e_a, e_p, int(pooled.size), t_med, pi, frames)


def evaluate_frames(preds: Sequence[NormalMap], gts: Sequence[NormalMap], names=None,
                    phis=DEFAULT_PHIS, method: str = "", dataset: str = "") -> EvalReport:
    """Metrics for already-estimated frames (no timing)."""
    if len(preds) != len(gts):
        raise InvalidInputError("prediction and ground-truth lists differ in length")
    names = list(names) if names is not None else [str(i) for i in range(len(preds))]
    errs = [error_map(p, g) for p, g in zip(preds, gts)]
    return summarize([e.values[e.mask] for e in errs], names, [0.0] * len(errs), phis, method, dataset)


def benchmark(method: Union[str, Callable], dataset, repetitions: int = 5, phis=DEFAULT_PHIS,
              warmup: bool = True, clock=time.perf_counter) -> EvalReport:
    """Time and score an estimator on every frame of ``dataset``.

    For each frame one warmup call is discarded, then ``repetitions`` calls
    are timed (estimation only, no I/O); the frame time is their median.
    Metrics come from the first timed output. Frames that fail to load or
    estimate are recorded and skipped.
    """
    from .methods import get_method

    if repetitions < 1:
        raise InvalidInputError(f"repetitions must be >= 1, got {repetitions}")
    if isinstance(method, str):
        name, fn = method, get_method(method)
    else:
        name, fn = getattr(method, "__name__", "custom"), method
    names, errs, times, failures = [], [], [], {}
    frame_names = list(dataset.frame_names())
    if not frame_names:
        raise EmptyInputError("dataset has no frames")
    for fname in frame_names:
        try:
            frame = dataset.load(fname)
            K = frame.intrinsics
            if warmup:
                fn(frame.depth, K)
            samples = []
            pred = None
            for _ in range(repetitions):
                t0 = clock()
                out = fn(frame.depth, K)
                samples.append((clock() - t0) * 1e3)
                if pred is None:
                    pred = out
            emap = error_map(pred, frame.gt)
        except Exception as exc:  # a broken frame must not sink the whole run
            failures[fname] = f"{type(exc).__name__}: {exc}"
            continue
        names.append(fname)
        errs.append(emap.values[emap.mask])
        times.append(float(np.median(samples)))
    return summarize(errs, names, times, phis, name, getattr(dataset, "name", ""), failures)
