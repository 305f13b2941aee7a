"""Corpus I/O: one JSON-Lines file per sequence plus a manifest document."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anatomy import LANDMARK_NAMES, AnatomySpec
from .config import SimConfig
from .records import (
    ANNOTATION_CHANNELS,
    LABEL_GROUPS,
    SCHEMA_VERSION,
    FrameRecord,
    RecordFormatError,
    decode_labels,
)
from .simulation import sequence_seed, simulate_sequence

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def sequence_filename(index: int) -> str:
    return f"seq_{index:05d}.jsonl"


def anatomy_filename(index: int) -> str:
    return f"seq_{index:05d}.anatomy.json"


def encode_sequence(records) -> str:
    lines = [r.to_json() for r in records]
    return "".join(line + "\n" for line in lines)


def write_sequence(records, path) -> dict:
    """Write one sequence; returns its manifest entry."""
    path = Path(path)
    text = encode_sequence(records)
    path.write_text(text)
    return {
        "file": path.name,
        "frames": len(records),
        "sha256": hashlib.sha256(text.encode()).hexdigest(),
    }


def read_sequence(path) -> list[FrameRecord]:
    path = Path(path)
    records = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(f"invalid JSON at column {exc.colno}: {exc.msg}", path, lineno) from exc
            if not isinstance(doc, dict):
                raise RecordFormatError("record is not a JSON object", path, lineno)
            try:
                records.append(FrameRecord.from_dict(doc))
            except RecordFormatError as exc:
                raise RecordFormatError(str(exc), path, lineno) from exc
    return records


# --------------------------------------------------------------------------
# manifest


@dataclass
class Manifest:
    config_hash: str
    master_seed: int | None
    sequences: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    anatomy: str | None = None  # shared anatomy file, if any
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": "corpus_manifest",
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "anatomy": self.anatomy,
            "config": self.config,
            "label_groups": {k: list(v) for k, v in LABEL_GROUPS.items()},
            "annotation_channels": list(ANNOTATION_CHANNELS),
            "sequences": self.sequences,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Manifest":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise RecordFormatError(f"manifest schema_version {doc.get('schema_version')!r} != {SCHEMA_VERSION}")
        return cls(
            config_hash=doc["config_hash"],
            master_seed=doc.get("master_seed"),
            sequences=list(doc.get("sequences", [])),
            config=doc.get("config", {}),
            anatomy=doc.get("anatomy"),
        )

    @property
    def frame_counts(self) -> list[int]:
        return [s["frames"] for s in self.sequences]


def write_manifest(manifest: Manifest, directory) -> Path:
    path = Path(directory) / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n")
    return path


def read_manifest(corpus) -> tuple[Manifest, Path]:
    """Accepts the corpus directory or the manifest path itself."""
    corpus = Path(corpus)
    path = corpus / MANIFEST_NAME if corpus.is_dir() else corpus
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"invalid manifest JSON: {exc.msg}", path, exc.lineno) from exc
    return Manifest.from_dict(doc), path.parent


def iter_corpus(corpus):
    """Yield ``(entry, records)`` for every sequence listed in the manifest."""
    manifest, root = read_manifest(corpus)
    for entry in manifest.sequences:
        path = root / entry["file"]
        if not path.exists():
            raise FileNotFoundError(f"manifest lists missing file {path}")
        records = read_sequence(path)
        if len(records) != entry["frames"]:
            raise RecordFormatError(f"manifest lists {entry['frames']} frames, file has {len(records)}", path)
        yield entry, records


def load_corpus(corpus) -> list[list[FrameRecord]]:
    return [records for _, records in iter_corpus(corpus)]


# --------------------------------------------------------------------------
# generation


def _simulate_one(args):
    index, seed, config_doc, anatomy_doc = args
    from .config import from_dict

    config = from_dict(config_doc)
    anatomy = AnatomySpec.from_dict(anatomy_doc) if anatomy_doc is not None else None
    drawn, records = simulate_sequence(seed, anatomy, config, sequence_id=index)
    return index, seed, encode_sequence(records), len(records), drawn.to_dict()


def generate_corpus(
    config: SimConfig,
    master_seed: int,
    out_dir,
    n_sequences: int,
    workers: int = 1,
    anatomy: AnatomySpec | None = None,
) -> Manifest:
    """Simulate ``n_sequences`` and write them under ``out_dir``.

    Workers only compute; this process writes every file, in index order, so
    the output bytes do not depend on the worker count.
    """
    if n_sequences < 1:
        raise ValueError("need at least one sequence")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_doc = config.to_dict()
    anatomy_doc = anatomy.to_dict() if anatomy is not None else None
    jobs = [(i, sequence_seed(master_seed, i), config_doc, anatomy_doc) for i in range(n_sequences)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_simulate_one, jobs, chunksize=max(1, n_sequences // (4 * workers)))
            results = list(results)
    else:
        results = [_simulate_one(job) for job in jobs]

    entries = []
    shared = None
    if anatomy is not None:
        shared = "anatomy.json"
        anatomy.save(out / shared)
    for index, seed, text, n_frames, drawn in results:
        name = sequence_filename(index)
        (out / name).write_text(text)
        entry = {
            "sequence_id": index,
            "seed": seed,
            "file": name,
            "frames": n_frames,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        }
        if anatomy is None:
            anat_name = anatomy_filename(index)
            (out / anat_name).write_text(json.dumps(drawn, indent=2, sort_keys=True) + "\n")
            entry["anatomy_file"] = anat_name
        entries.append(entry)
    manifest = Manifest(config.hash(), int(master_seed), entries, config_doc, shared)
    write_manifest(manifest, out)
    log.info("wrote %d sequences (%d frames) to %s", len(entries), sum(manifest.frame_counts), out)
    return manifest


# --------------------------------------------------------------------------
# validation

_ACTIVITY_RANK = {"position_wire": 0, "insert_wire": 1, "insert_screw": 2}


@dataclass(frozen=True)
class Violation:
    frame_index: int
    rule: str
    message: str

    def __str__(self) -> str:
        return f"frame {self.frame_index}: [{self.rule}] {self.message}"


@dataclass
class ValidationReport:
    n_frames: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, frame: int, rule: str, message: str) -> None:
        self.violations.append(Violation(frame, rule, message))

    def rules(self) -> Counter:
        return Counter(v.rule for v in self.violations)


def validate_sequence(records, max_frames: int = 1000, max_tools_per_kind: int = 8) -> ValidationReport:
    """Check every frame against the label grammar; reports, never raises."""
    report = ValidationReport(len(records))
    if len(records) > max_frames:
        report.add(max_frames, "frame_cap", f"{len(records)} frames exceed the cap of {max_frames}")
    seen_corridors = set()
    episode_corridor = None
    episode_rank = -1
    view_run = None  # (corridor, view)
    view_run_assessed = False
    seq_id = records[0].sequence_id if records else None

    for pos, r in enumerate(records):
        i = r.frame_index
        if r.sequence_id != seq_id:
            report.add(i, "sequence_id", f"sequence id {r.sequence_id} != {seq_id}")
        if i != pos:
            report.add(i, "frame_index", f"expected frame index {pos}")
        try:
            decoded = decode_labels(r.label_vector)
        except ValueError as exc:
            report.add(i, "label_cardinality", str(exc))
        else:
            if decoded != r.labels:
                report.add(i, "label_consistency", f"label vector {decoded} disagrees with labels {r.labels}")
        if len(r.landmarks_2d) != len(LANDMARK_NAMES):
            report.add(i, "landmark_count", f"{len(r.landmarks_2d)} landmarks, expected {len(LANDMARK_NAMES)}")
        kinds = Counter(t.get("kind") for t in r.tools)
        for kind in ("wire", "screw"):
            if kinds[kind] > max_tools_per_kind:
                report.add(i, "tool_cap", f"{kinds[kind]} {kind}s exceed {max_tools_per_kind}")

        rank = _ACTIVITY_RANK.get(r.activity)
        if rank is None:
            continue
        if r.corridor != episode_corridor:
            if r.corridor in seen_corridors:
                report.add(i, "corridor_revisit", f"corridor {r.corridor} revisited after its episode ended")
            seen_corridors.add(r.corridor)
            episode_corridor = r.corridor
            if rank != 0:
                report.add(i, "activity_order", f"episode for {r.corridor} starts with {r.activity}")
            episode_rank = rank
        elif rank < episode_rank:
            report.add(i, "activity_order", f"activity moved backward to {r.activity}")
        else:
            episode_rank = rank

        run = (r.corridor, r.view)
        if run != view_run:
            view_run = run
            view_run_assessed = False
        if r.frame_value == "assessment":
            view_run_assessed = True
        elif view_run_assessed:
            report.add(i, "view_episode", f"hunting frame after assessment within the {r.view} view episode")
    return report


# --------------------------------------------------------------------------
# statistics


def corpus_stats(corpus, bin_width: int = 50) -> dict:
    """Label frequencies, sequence-length histogram and hunting:assessment ratio."""
    manifest, root = read_manifest(corpus)
    counts = {name: Counter() for name in LABEL_GROUPS}
    lengths = []
    for entry in manifest.sequences:
        path = root / entry["file"]
        if not path.exists():
            raise FileNotFoundError(f"manifest lists missing file {path}")
        records = read_sequence(path)
        lengths.append(len(records))
        for r in records:
            for name, value in r.labels.items():
                counts[name][value] += 1
    total = sum(lengths)
    freqs = {
        name: {c: (counts[name][c] / total if total else 0.0) for c in classes}
        for name, classes in LABEL_GROUPS.items()
    }
    binned = Counter((n // bin_width) * bin_width for n in lengths)
    hist = {f"{lo}-{lo + bin_width - 1}": binned[lo] for lo in sorted(binned)}
    hunting = counts["frame_value"]["hunting"]
    assessment = counts["frame_value"]["assessment"]
    return {
        "sequences": len(lengths),
        "frames": total,
        "frequencies": freqs,
        "counts": {name: {c: counts[name][c] for c in classes} for name, classes in LABEL_GROUPS.items()},
        "length_histogram": hist,
        "length_mean": float(np.mean(lengths)) if lengths else 0.0,
        "hunting_to_assessment": (hunting / assessment) if assessment else None,
    }


def format_stats(stats: dict) -> str:
    lines = [f"sequences: {stats['sequences']}   frames: {stats['frames']}   mean length: {stats['length_mean']:.1f}"]
    ratio = stats["hunting_to_assessment"]
    lines.append(f"hunting:assessment = {ratio:.3f}" if ratio is not None else "hunting:assessment = n/a")
    for group, freqs in stats["frequencies"].items():
        lines.append(f"\n{group} ({len(freqs)} classes)")
        for name, f in freqs.items():
            lines.append(f"  {name:<16} {stats['counts'][group][name]:>8d}  {100 * f:6.2f}%")
    lines.append("\nsequence length histogram")
    for key, n in stats["length_histogram"].items():
        lines.append(f"  {key:>11}  {n}")
    return "\n".join(lines)

