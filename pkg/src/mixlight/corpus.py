"""Corpus construction: oracle separation, loudness adjustment, remixing.

For every clip the pipeline synthesizes a scene, renders the ground-truth mix,
separates it with a controllable-leakage oracle (residual guarantees the sum
identity), perturbs per-class loudness on a dB ladder, and remixes the result
into the poorly-balanced input. Clips, context matrices and a JSON Lines
manifest land in a flat directory layout.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from . import scene as scenemod
from .audio import AudioClip, apply_gain_db, read_wav, write_wav
from .errors import ClipRejected, ConfigError, FormatError, InputError
from .loudness import LoudnessReading, integrated_loudness, gain_to_target
from .scene import ContextFeatureMatrix, HighlightSchedule, StemSet

log = logging.getLogger("mixlight.corpus")

DIFFICULTIES = ("high", "moderate", "low", "random")
_TIER_DB = {"high": 12.0, "moderate": 9.0, "low": 6.0}
_LADDER = (6.0, 9.0, 12.0)
_TIE_EPS_LU = 0.1
# Fixed priority for loudest-stem ties: speech > music > effects.
_TIE_ORDER = {"speech": 0, "music": 1, "effects": 2}

CFM_MAGIC = b"CFMATRX1"


# ---------------------------------------------------------------------------
# Context feature matrix file format
# ---------------------------------------------------------------------------

def write_cfm(path, ctx: ContextFeatureMatrix):
    header = json.dumps(
        {"frames": ctx.frames, "dim": ctx.dim, "dtype": "f32", "layout": "row-major"},
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CFM_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(ctx.data.astype("<f4").tobytes())


def read_cfm(path) -> ContextFeatureMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CFM_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    if header.get("dtype") != "f32" or header.get("layout") != "row-major":
        raise FormatError(f"{path}: unsupported dtype/layout {header}")
    frames, dim = int(header["frames"]), int(header["dim"])
    payload = blob[12 + hlen :]
    if len(payload) != frames * dim * 4:
        raise FormatError(f"{path}: payload size mismatch")
    data = np.frombuffer(payload, dtype="<f4").reshape(frames, dim)
    return ContextFeatureMatrix(data=data.astype(np.float64))


# ---------------------------------------------------------------------------
# Separation / adjustment / remixing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparatedStems:
    """Leaky per-class tracks plus the residual closing the sum identity."""

    speech: AudioClip
    music: AudioClip
    effects: AudioClip
    residual: AudioClip

    @property
    def sample_rate(self) -> int:
        return self.speech.sample_rate

    def sum_error(self, mix: AudioClip) -> float:
        total = (
            self.speech.samples + self.music.samples + self.effects.samples + self.residual.samples
        )
        return float(np.max(np.abs(total - mix.samples)))


def oracle_separate(gt_mix: AudioClip, true_stems: StemSet, leakage: float) -> SeparatedStems:
    """Separate ``gt_mix`` into leaky stems; ``true_stems`` are the

    schedule-gained components whose sum is the mix. Each output keeps a
    (1 - leakage) share of its own class plus leakage/2 of each other class,
    and the residual absorbs whatever is left so the sum identity always holds.
    """
    if not (0.0 <= leakage < 0.5):
        raise ConfigError(f"leakage must lie in [0, 0.5), got {leakage}")
    g = true_stems.as_array()
    sr = true_stems.sample_rate
    sep = np.empty_like(g)
    for i in range(3):
        others = g.sum(axis=0) - g[i]
        sep[i] = (1.0 - leakage) * g[i] + (leakage / 2.0) * others
    residual = gt_mix.samples - sep.sum(axis=0)
    return SeparatedStems(
        speech=AudioClip(samples=sep[0], sample_rate=sr),
        music=AudioClip(samples=sep[1], sample_rate=sr),
        effects=AudioClip(samples=sep[2], sample_rate=sr),
        residual=AudioClip(samples=residual, sample_rate=sr),
    )


@dataclass(frozen=True)
class ClassAdjustment:
    action: str  # Suppress | Highlight | Skip
    strength_db: float
    loudness_before: float | None  # LUFS, None when silent
    loudness_after: float | None


@dataclass(frozen=True)
class AdjustmentRecord:
    per_class: dict  # class name -> ClassAdjustment
    difficulty: str
    seed: int

    def to_json(self) -> dict:
        return {
            "difficulty": self.difficulty,
            "seed": self.seed,
            "classes": {
                name: {
                    "action": adj.action,
                    "strength_db": adj.strength_db,
                    "loudness_before": adj.loudness_before,
                    "loudness_after": adj.loudness_after,
                }
                for name, adj in self.per_class.items()
            },
        }

    @staticmethod
    def from_json(obj: dict) -> "AdjustmentRecord":
        per_class = {
            name: ClassAdjustment(
                action=c["action"],
                strength_db=float(c["strength_db"]),
                loudness_before=c["loudness_before"],
                loudness_after=c["loudness_after"],
            )
            for name, c in obj["classes"].items()
        }
        return AdjustmentRecord(
            per_class=per_class, difficulty=obj["difficulty"], seed=int(obj["seed"])
        )


@dataclass(frozen=True)
class AdjustedStems:
    """Gain-perturbed tracks ready for remixing; effects carries the residual."""

    speech: AudioClip
    music: AudioClip
    effects: AudioClip  # adjusted (effects + residual) track

    def as_list(self):
        return [self.speech, self.music, self.effects]


def _draw_strength(difficulty: str, gen: np.random.Generator) -> float:
    if difficulty == "random":
        return float(gen.choice(_LADDER))
    return _TIER_DB[difficulty]


def adjust(
    stems: SeparatedStems, difficulty: str, seed: int
) -> tuple[AdjustedStems, AdjustmentRecord]:
    """Suppress the loudest class, highlight the rest, per the dB ladder.

    The sound-effects class is measured and adjusted as the combined
    effects+residual track. Silent classes are skipped; fewer than two
    measurable classes rejects the clip.
    """
    if difficulty not in DIFFICULTIES:
        raise ConfigError(f"difficulty must be one of {DIFFICULTIES}, got {difficulty!r}")
    sr = stems.sample_rate
    effects_combined = AudioClip(
        samples=stems.effects.samples + stems.residual.samples, sample_rate=sr
    )
    tracks = {"speech": stems.speech, "music": stems.music, "effects": effects_combined}
    readings = {name: integrated_loudness(clip) for name, clip in tracks.items()}
    audible = [name for name, r in readings.items() if not r.is_silent]
    if len(audible) < 2:
        raise ClipRejected(f"fewer than two non-silent stems (audible: {audible or 'none'})")

    loudest_lufs = max(readings[name].lufs for name in audible)
    tied = [name for name in audible if readings[name].lufs >= loudest_lufs - _TIE_EPS_LU]
    suppressed = min(tied, key=lambda name: _TIE_ORDER[name])

    gen = rngmod.stream(seed, "adjust")
    per_class: dict[str, ClassAdjustment] = {}
    adjusted: dict[str, AudioClip] = {}
    for name in ("speech", "music", "effects"):
        clip = tracks[name]
        reading = readings[name]
        if reading.is_silent:
            per_class[name] = ClassAdjustment("Skip", 0.0, None, None)
            adjusted[name] = clip
            continue
        magnitude = _draw_strength(difficulty, gen)
        strength = -magnitude if name == suppressed else magnitude
        out = apply_gain_db(clip, strength)
        after = integrated_loudness(out)
        per_class[name] = ClassAdjustment(
            action="Suppress" if name == suppressed else "Highlight",
            strength_db=strength,
            loudness_before=reading.lufs,
            loudness_after=after.lufs if not after.is_silent else None,
        )
        adjusted[name] = out
    record = AdjustmentRecord(per_class=per_class, difficulty=difficulty, seed=seed)
    return (
        AdjustedStems(speech=adjusted["speech"], music=adjusted["music"], effects=adjusted["effects"]),
        record,
    )


def remix(adjusted: AdjustedStems) -> AudioClip:
    clips = adjusted.as_list()
    if len({len(c) for c in clips}) != 1:
        raise InputError("adjusted stems must share length")
    total = np.zeros(len(clips[0]))
    for c in clips:
        total += c.samples
    return AudioClip(samples=total, sample_rate=clips[0].sample_rate)


# ---------------------------------------------------------------------------
# Corpus builder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusConfig:
    sr: int = 8000
    seconds: int = 10
    seed: int = 0
    difficulty: str = "random"
    leakage: float = 0.1
    salience_gap_db: float = 6.0
    context_dim: int = 16
    split_fractions: tuple = (0.8, 0.1, 0.1)

    def to_json(self) -> dict:
        return {
            "sr": self.sr,
            "seconds": self.seconds,
            "seed": self.seed,
            "difficulty": self.difficulty,
            "leakage": self.leakage,
            "salience_gap_db": self.salience_gap_db,
            "context_dim": self.context_dim,
            "split_fractions": list(self.split_fractions),
        }


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    seed: int
    sr: int
    seconds: int
    split: str
    paths: dict  # role -> relative path
    adjustment: AdjustmentRecord
    leakage: float
    salience_gap_db: float

    def to_json(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "seed": self.seed,
            "sr": self.sr,
            "seconds": self.seconds,
            "split": self.split,
            "paths": self.paths,
            "leakage": self.leakage,
            "salience_gap_db": self.salience_gap_db,
            "adjustment": self.adjustment.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "ClipRecord":
        return ClipRecord(
            clip_id=obj["clip_id"],
            seed=int(obj["seed"]),
            sr=int(obj["sr"]),
            seconds=int(obj["seconds"]),
            split=obj["split"],
            paths=dict(obj["paths"]),
            adjustment=AdjustmentRecord.from_json(obj["adjustment"]),
            leakage=float(obj["leakage"]),
            salience_gap_db=float(obj["salience_gap_db"]),
        )


@dataclass
class Manifest:
    records: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    root: Path | None = None

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def resolve(self, record: ClipRecord, role: str) -> Path:
        if self.root is None:
            raise InputError("manifest has no root directory")
        return self.root / record.paths[role]


def assign_split(clip_id: str, fractions=(0.8, 0.1, 0.1)) -> str:
    """Deterministic split from the clip_id hash."""
    digest = hashlib.sha1(clip_id.encode("utf-8")).digest()
    bucket = int.from_bytes(digest[:4], "little") % 10000
    train_hi = int(fractions[0] * 10000)
    val_hi = train_hi + int(fractions[1] * 10000)
    if bucket < train_hi:
        return "train"
    if bucket < val_hi:
        return "val"
    return "test"


SUM_IDENTITY_TOL = 1e-9


def _clip_paths(clip_id: str) -> dict:
    return {
        "gt": f"{clip_id}/gt.wav",
        "input": f"{clip_id}/input.wav",
        "stem_h": f"{clip_id}/stem_h.wav",
        "stem_m": f"{clip_id}/stem_m.wav",
        "stem_e": f"{clip_id}/stem_e.wav",
        "stem_r": f"{clip_id}/stem_r.wav",
        "context_vid": f"{clip_id}/ctx_vid.cfm",
        "context_text": f"{clip_id}/ctx_text.cfm",
    }


def build_clip(index: int, config: CorpusConfig, out_dir: Path) -> dict:
    """Build one clip end to end and write its files.

    Returns the manifest row dict (or a skip row with a ``skipped`` key).
    Raises nothing for rejected clips; I/O errors propagate.
    """
    clip_id = f"clip_{index:05d}"
    clip_seed = config.seed * 1_000_003 + index
    schedule = scenemod.make_schedule(clip_seed, config.seconds)
    stems = scenemod.synth_stems(clip_seed, config.sr, config.seconds)
    rendered = scenemod.render_scene(
        stems, schedule, config.salience_gap_db, config.context_dim, clip_seed
    )
    separated = oracle_separate(rendered.gt_mix, rendered.gained, config.leakage)
    err = separated.sum_error(rendered.gt_mix)
    if err > SUM_IDENTITY_TOL:
        raise AssertionError(f"{clip_id}: sum identity violated ({err:.3e})")
    try:
        adjusted, record = adjust(separated, config.difficulty, clip_seed)
    except ClipRejected as rej:
        log.warning("%s rejected: %s", clip_id, rej.reason)
        return {"clip_id": clip_id, "skipped": rej.reason}
    poorly_mixed = remix(adjusted)

    clip_dir = out_dir / clip_id
    clip_dir.mkdir(parents=True, exist_ok=True)
    paths = _clip_paths(clip_id)
    write_wav(out_dir / paths["gt"], rendered.gt_mix)
    write_wav(out_dir / paths["input"], poorly_mixed)
    write_wav(out_dir / paths["stem_h"], separated.speech)
    write_wav(out_dir / paths["stem_m"], separated.music)
    write_wav(out_dir / paths["stem_e"], separated.effects)
    write_wav(out_dir / paths["stem_r"], separated.residual)
    write_cfm(out_dir / paths["context_vid"], rendered.context_vid)
    write_cfm(out_dir / paths["context_text"], rendered.context_text)

    return ClipRecord(
        clip_id=clip_id,
        seed=clip_seed,
        sr=config.sr,
        seconds=config.seconds,
        split=assign_split(clip_id, config.split_fractions),
        paths=paths,
        adjustment=record,
        leakage=config.leakage,
        salience_gap_db=config.salience_gap_db,
    ).to_json()


def _build_clip_star(args):
    return build_clip(*args)


def build_corpus(
    n_clips: int, config: CorpusConfig, out_dir, jobs: int = 1
) -> Manifest:
    """Build ``n_clips`` accepted clips under ``out_dir`` plus manifest.jsonl.

    Rejected clips are logged as skip rows and do not count toward n_clips;
    the builder advances through extra indices until the quota is met.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    accepted = 0
    index = 0
    try:
        while accepted < n_clips:
            batch = max(n_clips - accepted, 1)
            tasks = [(index + k, config, out_dir) for k in range(batch)]
            index += batch
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    results = list(pool.map(_build_clip_star, tasks))
            else:
                results = [build_clip(*t) for t in tasks]
            for row in results:
                rows.append(row)
                if "skipped" not in row:
                    accepted += 1
    except Exception:
        # Leave no half-written clip directory behind the last manifest row.
        known = {row["clip_id"] for row in rows}
        for entry in sorted(out_dir.glob("clip_*")):
            if entry.name not in known and entry.is_dir():
                shutil.rmtree(entry, ignore_errors=True)
        raise

    manifest_path = out_dir / "manifest.jsonl"
    tmp_path = out_dir / "manifest.jsonl.tmp"
    with open(tmp_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"corpus_config": config.to_json()}) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    os.replace(tmp_path, manifest_path)
    return load_manifest(manifest_path)


def load_manifest(path) -> Manifest:
    path = Path(path)
    manifest = Manifest(root=path.parent)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            obj = json.loads(line)
            if line_no == 0 and "corpus_config" in obj:
                manifest.config = obj["corpus_config"]
                continue
            if "skipped" in obj:
                manifest.skipped.append(obj)
                continue
            manifest.records.append(ClipRecord.from_json(obj))
    return manifest


def load_clip_audio(manifest: Manifest, record: ClipRecord, role: str) -> AudioClip:
    return read_wav(manifest.resolve(record, role))


def load_clip_context(manifest: Manifest, record: ClipRecord, stream: str) -> ContextFeatureMatrix:
    return read_cfm(manifest.resolve(record, f"context_{stream}"))
