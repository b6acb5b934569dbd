"""Synthetic articulated point-cloud sequences with controllable class
structure: the desk-scale ground truth for exercising the whole pipeline.

A "body" is five analytic segments: a trunk ellipsoid plus four limb
capsules (two arms, two legs). Each activity is a periodic pattern of limb
swing angles and trunk motion; the catalog deliberately contains
left/right mirrored activity pairs. A mirrored activity reuses the exact
random streams of its base activity and flips the lateral coordinate, so
the two classes are exact mirror images: whole-body descriptors cannot
separate them, lateral quadrant descriptors can.

Subjects perturb segment lengths, motion amplitude, frequency and phase in
proportion to ``subject_variation``. Surface-sampling randomness is keyed
by (seed, activity, frame) only, so with zero noise and zero variation all
subjects produce byte-identical sequences; measurement noise is keyed per
subject on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import SequenceRecord, save_manifest, write_frame

DEFAULT_POINTS_PER_FRAME = 300
DEFAULT_NOISE_STD_M = 0.01
DEFAULT_SUBJECT_VARIATION = 0.15

# Stream domains for SeedSequence spawn keys.
_DOM_BODY = 0
_DOM_STYLE = 1
_DOM_POINTS = 2
_DOM_NOISE = 3


@dataclass(frozen=True)
class SynthSpec:
    """Size and randomness knobs of one generated dataset."""

    n_subjects: int
    n_activities: int
    frames_per_sequence: int
    points_per_frame: int = DEFAULT_POINTS_PER_FRAME
    noise_std_m: float = DEFAULT_NOISE_STD_M
    subject_variation: float = DEFAULT_SUBJECT_VARIATION
    seed: int = 0
    frame_rate_hz: float = 10.0

    def __post_init__(self) -> None:
        if min(self.n_subjects, self.n_activities, self.frames_per_sequence) < 1:
            raise ValueError("all counts must be >= 1")
        if self.points_per_frame < 10:
            raise ValueError("points_per_frame must be >= 10")
        if self.noise_std_m < 0:
            raise ValueError("noise_std_m must be >= 0")
        if not (0.0 <= self.subject_variation <= 1.0):
            raise ValueError("subject_variation must be in [0, 1]")


# (template, frequency multiplier). Mirrored variants are inserted right
# after their base template by _activity_roster.
_BASE_TEMPLATES = ("wave", "kick", "squat", "jack", "march", "bend", "twist")
_MIRRORED_TEMPLATES = ("wave", "kick")


@dataclass(frozen=True)
class ActivityDef:
    activity_id: str
    template: str
    freq_scale: float
    mirrored: bool
    base_index: int  # index of the activity whose point streams are reused


def activity_roster(n_activities: int) -> list[ActivityDef]:
    """Catalog of n distinct activities; mirror pairs come first."""
    defs: list[ActivityDef] = []
    cycle = 0
    while len(defs) < n_activities:
        freq = 1.0 + 0.4 * cycle
        for template in _BASE_TEMPLATES:
            if len(defs) >= n_activities:
                break
            base_index = len(defs)
            defs.append(
                ActivityDef(f"a{base_index:02d}", template, freq, False, base_index)
            )
            if template in _MIRRORED_TEMPLATES and len(defs) < n_activities:
                defs.append(
                    ActivityDef(f"a{len(defs):02d}", template, freq, True, base_index)
                )
        cycle += 1
    return defs


def mirror_pairs(n_activities: int) -> list[tuple[int, int]]:
    """Index pairs (base, mirrored) present in the roster."""
    roster = activity_roster(n_activities)
    return [(a.base_index, i) for i, a in enumerate(roster) if a.mirrored]


def _rng(seed: int, domain: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(domain, *key))
    return np.random.default_rng(ss)


@dataclass
class _Body:
    """Subject-specific rest geometry (before motion)."""

    shoulder_y: float
    hip_y: float
    shoulder_x: float
    hip_x: float
    trunk_semi: np.ndarray
    arm_len: float
    leg_len: float
    arm_radius: float
    leg_radius: float


def _subject_body(seed: int, subject: int, variation: float) -> _Body:
    rng = _rng(seed, _DOM_BODY, subject)
    u = lambda lo, hi: float(rng.uniform(lo, hi))
    g = 1.0 + variation * u(-0.18, 0.18)
    return _Body(
        shoulder_y=1.50 * g,
        hip_y=0.95 * g,
        shoulder_x=0.20 * g,
        hip_x=0.10 * g,
        trunk_semi=np.array([0.16, 0.33, 0.10])
        * g
        * (1.0 + variation * rng.uniform(-0.10, 0.10, size=3)),
        arm_len=0.58 * g * (1.0 + variation * u(-0.12, 0.12)),
        leg_len=0.92 * g * (1.0 + variation * u(-0.12, 0.12)),
        arm_radius=0.045 * (1.0 + variation * u(-0.15, 0.15)),
        leg_radius=0.065 * (1.0 + variation * u(-0.15, 0.15)),
    )


@dataclass
class _Style:
    amp: float
    freq: float
    phase: float


def _subject_style(
    seed: int, subject: int, base_index: int, variation: float
) -> _Style:
    rng = _rng(seed, _DOM_STYLE, subject, base_index)
    return _Style(
        amp=1.0 + variation * float(rng.uniform(-0.25, 0.25)),
        freq=1.0 + variation * float(rng.uniform(-0.20, 0.20)),
        phase=variation * float(rng.uniform(-math.pi, math.pi)),
    )


def _lat_swing(angle: float) -> np.ndarray:
    """Rest direction (0,-1,0) rotated about the depth axis."""
    return np.array([math.sin(angle), -math.cos(angle), 0.0])


def _fwd_swing(angle: float, lat_angle: float = 0.0) -> np.ndarray:
    """Rest direction rotated forward (about lateral), then sideways."""
    cb, sb = math.cos(angle), math.sin(angle)
    return np.array(
        [cb * math.sin(lat_angle), -cb * math.cos(lat_angle), sb]
    )


@dataclass
class _Pose:
    """Per-frame joint placement derived from a template at time t."""

    trunk_center: np.ndarray
    trunk_semi: np.ndarray
    trunk_pitch: float  # about the lateral axis through the hip line
    trunk_yaw: float  # about the vertical axis
    shoulders: dict[str, np.ndarray]
    hips: dict[str, np.ndarray]
    arm_dirs: dict[str, np.ndarray]
    leg_dirs: dict[str, np.ndarray]
    arm_len: float
    leg_lens: dict[str, float]


def _pose(template: str, t: float, body: _Body, style: _Style, freq_scale: float) -> _Pose:
    w = 2.0 * math.pi * style.freq * freq_scale
    ph = style.phase
    amp = style.amp
    osc = math.sin(w * t + ph)
    ramp = 0.5 * (1.0 - math.cos(w * t + ph))  # smooth 0..1..0

    drop = 0.0
    pitch = 0.0
    yaw = 0.0
    arm = {"L": 0.06 * osc, "R": 0.06 * osc}  # small idle sway, lateral
    arm_fwd = {"L": 0.0, "R": 0.0}
    leg = {"L": 0.0, "R": 0.0}  # lateral
    leg_fwd = {"L": 0.0, "R": 0.0}
    leg_scale = {"L": 1.0, "R": 1.0}

    if template == "wave":
        arm["L"] = amp * (1.35 + 0.45 * osc)
        arm["R"] = 0.08 * osc
    elif template == "kick":
        leg_fwd["L"] = amp * 0.55 * osc
        arm_fwd["L"] = -0.15 * osc
        arm_fwd["R"] = -0.15 * osc
    elif template == "squat":
        c = amp * 0.9 * ramp
        drop = 0.30 * c
        leg_scale["L"] = leg_scale["R"] = 1.0 - 0.30 * c
        arm_fwd["L"] = arm_fwd["R"] = 1.1 * c
        arm["L"] = arm["R"] = 0.0
    elif template == "jack":
        a = amp * 1.25 * ramp
        arm["L"] = arm["R"] = a * 2.0
        leg["L"] = leg["R"] = a * 0.35
    elif template == "march":
        leg_fwd["L"] = amp * 0.5 * osc
        leg_fwd["R"] = -amp * 0.5 * osc
        arm_fwd["L"] = -amp * 0.35 * osc
        arm_fwd["R"] = amp * 0.35 * osc
    elif template == "bend":
        pitch = amp * 0.75 * ramp
        arm["L"] = arm["R"] = 0.0
    elif template == "twist":
        yaw = amp * 0.65 * osc
    else:
        raise ValueError(f"unknown activity template {template!r}")

    hip_y = body.hip_y - drop
    shoulder_y = body.shoulder_y - drop
    trunk_center = np.array([0.0, (hip_y + shoulder_y) / 2.0, 0.0])

    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    hip_pivot = np.array([0.0, hip_y, 0.0])

    def place_upper(point: np.ndarray) -> np.ndarray:
        # Pitch about the hip line, then yaw about the vertical axis.
        d = point - hip_pivot
        d = np.array([d[0], cp * d[1] - sp * d[2], sp * d[1] + cp * d[2]])
        d = np.array([cy * d[0] + sy * d[2], d[1], -sy * d[0] + cy * d[2]])
        return hip_pivot + d

    shoulders = {
        "L": place_upper(np.array([-body.shoulder_x, shoulder_y, 0.0])),
        "R": place_upper(np.array([body.shoulder_x, shoulder_y, 0.0])),
    }
    hips = {
        "L": np.array([-body.hip_x, hip_y, 0.0]),
        "R": np.array([body.hip_x, hip_y, 0.0]),
    }
    # Lateral swings open outward: negative lateral for the left side.
    arm_dirs = {
        "L": _fwd_swing(arm_fwd["L"], -arm["L"]),
        "R": _fwd_swing(arm_fwd["R"], arm["R"]),
    }
    leg_dirs = {
        "L": _fwd_swing(leg_fwd["L"], -leg["L"]),
        "R": _fwd_swing(leg_fwd["R"], leg["R"]),
    }
    return _Pose(
        trunk_center=place_upper(trunk_center),
        trunk_semi=body.trunk_semi,
        trunk_pitch=pitch,
        trunk_yaw=yaw,
        shoulders=shoulders,
        hips=hips,
        arm_dirs=arm_dirs,
        leg_dirs=leg_dirs,
        arm_len=body.arm_len,
        leg_lens={s: body.leg_len * leg_scale[s] for s in ("L", "R")},
    )


def _point_budget(total: int) -> tuple[int, int]:
    """(trunk points, per-limb points) summing to total across 5 segments."""
    limb = max(3, int(round(total * 0.15)))
    trunk = total - 4 * limb
    if trunk < 3:
        limb = (total - 3) // 4
        trunk = total - 4 * limb
    return trunk, limb


def _orthonormal_frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(d, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return e1, e2


def _sample_frame(
    pose: _Pose,
    body: _Body,
    n_points: int,
    rng_points: np.random.Generator,
    rng_noise: np.random.Generator,
    noise_std: float,
) -> np.ndarray:
    n_trunk, n_limb = _point_budget(n_points)
    pts = np.empty((n_points, 3))

    # Trunk: ellipsoid surface, pitched and yawed like the upper body.
    u = rng_points.standard_normal((n_trunk, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    local = u * pose.trunk_semi
    cp, sp = math.cos(pose.trunk_pitch), math.sin(pose.trunk_pitch)
    cy, sy = math.cos(pose.trunk_yaw), math.sin(pose.trunk_yaw)
    pitched = np.column_stack(
        (
            local[:, 0],
            cp * local[:, 1] - sp * local[:, 2],
            sp * local[:, 1] + cp * local[:, 2],
        )
    )
    yawed = np.column_stack(
        (
            cy * pitched[:, 0] + sy * pitched[:, 2],
            pitched[:, 1],
            -sy * pitched[:, 0] + cy * pitched[:, 2],
        )
    )
    pts[:n_trunk] = pose.trunk_center + yawed

    offset = n_trunk
    limbs = [
        (pose.shoulders["L"], pose.arm_dirs["L"], pose.arm_len, body.arm_radius),
        (pose.shoulders["R"], pose.arm_dirs["R"], pose.arm_len, body.arm_radius),
        (pose.hips["L"], pose.leg_dirs["L"], pose.leg_lens["L"], body.leg_radius),
        (pose.hips["R"], pose.leg_dirs["R"], pose.leg_lens["R"], body.leg_radius),
    ]
    for joint, d, length, radius in limbs:
        ts = rng_points.uniform(0.0, 1.0, n_limb)
        theta = rng_points.uniform(0.0, 2.0 * math.pi, n_limb)
        e1, e2 = _orthonormal_frame(d)
        ring = (
            np.cos(theta)[:, None] * e1[None, :] + np.sin(theta)[:, None] * e2[None, :]
        )
        pts[offset : offset + n_limb] = (
            joint[None, :] + ts[:, None] * length * d[None, :] + radius * ring
        )
        offset += n_limb

    if noise_std > 0:
        pts = pts + rng_noise.normal(0.0, noise_std, pts.shape)
    else:
        # Keep the noise stream position identical either way.
        rng_noise.normal(0.0, 1.0, pts.shape)
    return pts


def generate(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write frames and a manifest; returns the manifest path.

    Output is byte-identical for identical specs. Sequences are generated
    one by one; environments are assigned by splitting subjects into four
    consecutive blocks (E1..E4) so environment-based splits are exercisable.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    roster = activity_roster(spec.n_activities)
    records = []
    for si in range(spec.n_subjects):
        subject_id = f"s{si:02d}"
        env_id = f"E{1 + (4 * si) // spec.n_subjects}" if spec.n_subjects >= 4 else "E1"
        body = _subject_body(spec.seed, si, spec.subject_variation)
        for ai, act in enumerate(roster):
            style = _subject_style(spec.seed, si, act.base_index, spec.subject_variation)
            sequence_id = f"s{si:02d}a{ai:02d}"
            seq_dir = frames_dir / sequence_id
            seq_dir.mkdir(parents=True, exist_ok=True)
            paths = []
            for fi in range(spec.frames_per_sequence):
                t = fi / spec.frame_rate_hz
                pose = _pose(act.template, t, body, style, act.freq_scale)
                pts = _sample_frame(
                    pose,
                    body,
                    spec.points_per_frame,
                    _rng(spec.seed, _DOM_POINTS, act.base_index, fi),
                    _rng(spec.seed, _DOM_NOISE, act.base_index, si, fi),
                    spec.noise_std_m,
                )
                if act.mirrored:
                    pts[:, 0] = -pts[:, 0]
                path = seq_dir / f"{sequence_id}_f{fi:04d}.bin"
                write_frame(pts, path)
                paths.append(path)
            records.append(
                SequenceRecord(
                    sequence_id=sequence_id,
                    subject_id=subject_id,
                    activity_id=act.activity_id,
                    environment_id=env_id,
                    frame_paths=paths,
                    frame_rate_hz=spec.frame_rate_hz,
                )
            )
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(records, manifest_path)
    return manifest_path
