"""Cohort manifests: which scans exist, where their tensors live, ID/OOD labels.

Manifests are JSON; artifact paths are stored relative to the manifest file
so a cohort directory can be moved wholesale. Loading validates eagerly and
names the offending scan_id on failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .ovf import as_logits, as_stage, read_ovf, validate_ovf
from .volumes import (
    STAGE_IDS,
    ChannelGrid,
    FeaturePyramid,
    LogitVolume,
    MaskVolume,
    Volume3D,
)

COHORT_LABELS = ("ID", "OOD")


@dataclass(frozen=True)
class ScanRecord:
    scan_id: str
    cohort_label: str
    cohort_name: str
    volume: Path
    mask: Path
    logits: Path
    pyramid: tuple[Path, ...] | None = None


@dataclass(frozen=True)
class CohortManifest:
    dataset_name: str
    records: tuple[ScanRecord, ...]
    provenance: dict | None = None
    path: Path | None = None

    def cohort_names(self, label: str | None = None) -> list[str]:
        """Cohort names in first-appearance order, optionally by label."""
        seen: list[str] = []
        for rec in self.records:
            if label is not None and rec.cohort_label != label:
                continue
            if rec.cohort_name not in seen:
                seen.append(rec.cohort_name)
        return seen

    def by_cohort(self, cohort_name: str) -> list[ScanRecord]:
        return [r for r in self.records if r.cohort_name == cohort_name]

    def record(self, scan_id: str) -> ScanRecord:
        for rec in self.records:
            if rec.scan_id == scan_id:
                return rec
        raise DataError(f"scan_id {scan_id!r} not in manifest")


def load_manifest(path, validate: bool = True) -> CohortManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from exc

    if not isinstance(doc, dict) or "dataset_name" not in doc or "records" not in doc:
        raise DataError(f"manifest {path} must carry dataset_name and records")

    base = path.parent
    records = []
    seen_ids: set[str] = set()
    for entry in doc["records"]:
        sid = entry.get("scan_id")
        if not sid or not isinstance(sid, str):
            raise DataError(f"manifest {path}: record without scan_id")
        if sid in seen_ids:
            raise DataError(f"manifest {path}: duplicate scan_id {sid!r}")
        seen_ids.add(sid)
        label = entry.get("cohort_label")
        if label not in COHORT_LABELS:
            raise DataError(f"scan {sid!r}: unknown cohort_label {label!r}")
        pyramid = entry.get("pyramid")
        if pyramid is not None:
            if len(pyramid) != len(STAGE_IDS):
                raise DataError(f"scan {sid!r}: pyramid must list {len(STAGE_IDS)} paths")
            pyramid = tuple(base / p for p in pyramid)
        try:
            rec = ScanRecord(
                scan_id=sid,
                cohort_label=label,
                cohort_name=entry.get("cohort_name", label),
                volume=base / entry["volume"],
                mask=base / entry["mask"],
                logits=base / entry["logits"],
                pyramid=pyramid,
            )
        except KeyError as exc:
            raise DataError(f"scan {sid!r}: missing artifact key {exc}") from exc
        records.append(rec)

    manifest = CohortManifest(
        dataset_name=doc["dataset_name"],
        records=tuple(records),
        provenance=doc.get("provenance"),
        path=path,
    )
    if validate:
        validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: CohortManifest) -> None:
    """Every referenced tensor file must exist and parse structurally."""
    for rec in manifest.records:
        paths = [rec.volume, rec.mask, rec.logits]
        if rec.pyramid is not None:
            paths.extend(rec.pyramid)
        for p in paths:
            if not Path(p).is_file():
                raise DataError(f"scan {rec.scan_id!r}: missing artifact file {p}")
            try:
                validate_ovf(p)
            except DataError as exc:
                raise DataError(f"scan {rec.scan_id!r}: {exc}") from exc


def save_manifest(manifest: CohortManifest, path) -> None:
    path = Path(path)
    base = path.parent

    def rel(p: Path) -> str:
        return Path(p).relative_to(base).as_posix() if Path(p).is_absolute() else str(p)

    doc = {
        "dataset_name": manifest.dataset_name,
        "records": [
            {
                "scan_id": r.scan_id,
                "cohort_label": r.cohort_label,
                "cohort_name": r.cohort_name,
                "volume": rel(r.volume),
                "mask": rel(r.mask),
                "logits": rel(r.logits),
                **({"pyramid": [rel(p) for p in r.pyramid]} if r.pyramid else {}),
            }
            for r in manifest.records
        ],
    }
    if manifest.provenance is not None:
        doc["provenance"] = manifest.provenance
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_volume(rec: ScanRecord) -> Volume3D:
    vol = read_ovf(rec.volume)
    if not isinstance(vol, Volume3D):
        raise DataError(f"scan {rec.scan_id!r}: {rec.volume} is not a scalar volume")
    return vol


def load_mask(rec: ScanRecord) -> MaskVolume:
    mask = read_ovf(rec.mask)
    if not isinstance(mask, MaskVolume):
        raise DataError(f"scan {rec.scan_id!r}: {rec.mask} is not a mask")
    return mask


def load_logits(rec: ScanRecord) -> LogitVolume:
    grid = read_ovf(rec.logits)
    if not isinstance(grid, ChannelGrid):
        raise DataError(f"scan {rec.scan_id!r}: {rec.logits} is not a channel tensor")
    return as_logits(grid, rec.logits)


def load_pyramid(rec: ScanRecord, volume_spacing) -> FeaturePyramid:
    if rec.pyramid is None:
        raise DataError(f"scan {rec.scan_id!r}: no pyramid in manifest (run encode first)")
    stages = []
    for stage_id, p in zip(STAGE_IDS, rec.pyramid):
        grid = read_ovf(p)
        if not isinstance(grid, ChannelGrid):
            raise DataError(f"scan {rec.scan_id!r}: {p} is not a channel tensor")
        stages.append(as_stage(grid, stage_id, volume_spacing, p))
    # Reconstruct a volume grid consistent with every stage. ceil(ceil(d/p)*p
    # / f) == ceil(d/f) for the factor ladder, so PE carries enough information.
    pe = stages[0]
    volume_dims = tuple(d * pe.factor for d in pe.dims)
    return FeaturePyramid(volume_dims=volume_dims, stages=tuple(stages))
