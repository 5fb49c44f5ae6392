#!/usr/bin/env python3
"""
Datensatz-Pipeline: Instanzen -> FALQON-Referenzkurven -> Skalare ->
Standardisierung -> Splits -> persistierte Records

Layout unter dem Ausgabeverzeichnis:
    manifest.json          Konfiguration, Zählungen, Standardisierer, Records
    journal.jsonl          eine Statuszeile pro Record (fortsetzbar)
    records/<id>.json      Instanz, Referenzkurve, Rohskalare
"""

import json
import logging
import os
import threading
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Self

from batch_runner import run_batch
from config import (
    DATASET_FORMAT_VERSION,
    DEFAULT_SETTINGS,
    MAX_EXHAUSTIVE_VERTICES,
    MAX_MIDPOINT_GAP_QUBITS,
    TOLERANCES,
)
from errors import DatasetIOError, InvalidArgumentError, NumericError
from graph_instances import (
    GraphInstance,
    assign_weights,
    derive_seed,
    enumerate_cubic_topologies,
    sample_cubic_topology,
)
from hamiltonian import ScalarFeatures, scalar_features
from schedules import ParameterCurve, monotonic_violation, run_falqon
from serialization import dumps17, provenance, read_text, write_text

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

# Schlüssel für die Seed-Ableitung
_WEIGHT_KEY = 0
_SAMPLE_TOPOLOGY_KEY = 1
_SAMPLE_WEIGHT_KEY = 2


@dataclass
class DatasetConfig:
    sizes: List[int] = field(default_factory=lambda: list(DEFAULT_SETTINGS["sizes"]))
    draws_per_topology: int = DEFAULT_SETTINGS["draws_per_topology"]
    sample_sizes: Dict[str, int] = field(default_factory=dict)
    base_seed: int = DEFAULT_SETTINGS["base_seed"]
    split_seed: int = DEFAULT_SETTINGS["split_seed"]
    dt: float = DEFAULT_SETTINGS["dt"]
    ell: int = DEFAULT_SETTINGS["ell"]
    test_fraction: float = DEFAULT_SETTINGS["test_fraction"]
    val_fraction: float = DEFAULT_SETTINGS["val_fraction"]
    split_by_topology: bool = False

    def __post_init__(self):
        self.sizes = [int(n) for n in self.sizes]
        self.sample_sizes = {str(int(n)): int(k) for n, k in self.sample_sizes.items()}
        for n in self.sizes:
            if n < 4 or n % 2 or n > MAX_EXHAUSTIVE_VERTICES:
                raise InvalidArgumentError(f"Größe {n} ist nicht exhaustiv aufzählbar (gerade, 4..{MAX_EXHAUSTIVE_VERTICES})")
        for n, count in self.sample_sizes.items():
            if int(n) < 4 or int(n) % 2 or count < 1:
                raise InvalidArgumentError(f"sample_sizes[{n}] = {count} ungültig")
        if self.draws_per_topology < 1:
            raise InvalidArgumentError("draws_per_topology muss >= 1 sein")
        if not self.dt > 0 or int(self.ell) < 1:
            raise InvalidArgumentError(f"dt={self.dt}, ell={self.ell} ungültig")
        for name in ("test_fraction", "val_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise InvalidArgumentError(f"{name}={value} muss in [0, 1) liegen")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"Unbekannte Datensatzparameter: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str) -> Self:
        try:
            return cls.from_dict(json.loads(read_text(path)))
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"Datensatzkonfiguration ist kein JSON: {e}") from e


@dataclass
class DatasetRecord:
    record_id: str
    instance: GraphInstance
    reference_curve: ParameterCurve
    scalars_raw: Optional[ScalarFeatures]
    scalars_std: Optional[np.ndarray] = None
    split: str = ""
    sampled: bool = False

    def to_dict(self) -> Dict[str, Any]:
        """Inhalt der Record-Datei (Split und standardisierte Skalare stehen im Manifest)"""
        curve = self.reference_curve
        return {
            "record_id": self.record_id,
            "sampled": self.sampled,
            "instance": self.instance.to_dict(),
            "reference_curve": {"dt": curve.dt, "ell": curve.ell, "source": curve.source,
                                "betas": [float(b) for b in curve.betas]},
            "scalars_raw": self.scalars_raw.to_list() if self.scalars_raw is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        try:
            curve = data["reference_curve"]
            reference = ParameterCurve(float(curve["dt"]), np.array(curve["betas"], dtype=np.float64), curve["source"])
            if reference.ell != int(curve["ell"]):
                raise InvalidArgumentError(f"Record {data['record_id']}: ell passt nicht zur Kurve")
            raw = data.get("scalars_raw")
            return cls(
                record_id=str(data["record_id"]),
                instance=GraphInstance.from_dict(data["instance"]),
                reference_curve=reference,
                scalars_raw=ScalarFeatures.from_array(raw) if raw is not None else None,
                sampled=bool(data.get("sampled", False)),
            )
        except (KeyError, TypeError) as e:
            raise InvalidArgumentError(f"Record-Datei unvollständig: {e}") from e


@dataclass
class Standardizer:
    """Mittelwert und Standardabweichung pro Komponente auf dem Trainings-Split"""
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != self.mean.size:
            raise InvalidArgumentError(f"Erwarte {self.mean.size} Komponenten, nicht {values.shape[-1]}")
        return (values - self.mean) / self.std

    def to_dict(self) -> Dict[str, Any]:
        return {"fields": list(ScalarFeatures.field_names()), "version": ScalarFeatures.VERSION,
                "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(np.array(data["mean"], dtype=np.float64), np.array(data["std"], dtype=np.float64))


def fit_standardizer(records: Sequence[DatasetRecord]) -> Standardizer:
    """Populations-Statistik; konstante Komponenten bekommen std = 1"""
    rows = [r.scalars_raw.as_array() for r in records if r.split == "train" and r.scalars_raw is not None]
    if not rows:
        raise InvalidArgumentError("Kein Trainings-Split zum Anpassen des Standardisierers")
    stacked = np.vstack(rows)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    std = np.where(constant, 1.0, std)
    return Standardizer(mean, std)


def apply_standardizer(standardizer: Standardizer, record: DatasetRecord) -> Optional[np.ndarray]:
    if record.scalars_raw is None:
        return None
    return standardizer.apply(record.scalars_raw.as_array())


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _split_counts(total: int, test_fraction: float, val_fraction: float) -> Tuple[int, int]:
    test = _round_half_up(test_fraction * total)
    val = _round_half_up(val_fraction * (total - test))
    return test, val


def split_dataset(records: Sequence[DatasetRecord], config: DatasetConfig, seed: Optional[int] = None) -> Dict[str, str]:
    """Nach Größe stratifiziert: Anteil test, vom Rest Anteil val, Rest train

    Gesampelte Generalisierungsgrößen landen vollständig im Test-Split. Die
    Zuordnung hängt nur von den Record-IDs und dem Seed ab.
    """
    seed = config.split_seed if seed is None else seed
    strata: Dict[int, List[DatasetRecord]] = defaultdict(list)
    assignment: Dict[str, str] = {}
    for record in sorted(records, key=lambda r: r.record_id):
        if record.sampled:
            assignment[record.record_id] = "test"
        else:
            strata[record.instance.n].append(record)

    for n in sorted(strata):
        members = strata[n]
        test_count, val_count = _split_counts(len(members), config.test_fraction, config.val_fraction)
        if len(members) < 3:
            logger.warning(f"⚠️ Nur {len(members)} Records für n={n}; Split wird bestmöglich gerundet")
        rng = np.random.Generator(np.random.Philox(derive_seed(seed, n)))
        if config.split_by_topology:
            groups: Dict[str, List[str]] = defaultdict(list)
            for record in members:
                groups[record.instance.topology_id].append(record.record_id)
            order = [groups[key] for key in sorted(groups)]
            shuffled = [order[i] for i in rng.permutation(len(order))]
            assigned = 0
            for group in shuffled:
                if assigned < test_count:
                    label = "test"
                elif assigned < test_count + val_count:
                    label = "val"
                else:
                    label = "train"
                for record_id in group:
                    assignment[record_id] = label
                assigned += len(group)
        else:
            permuted = [members[i] for i in rng.permutation(len(members))]
            for k, record in enumerate(permuted):
                if k < test_count:
                    assignment[record.record_id] = "test"
                elif k < test_count + val_count:
                    assignment[record.record_id] = "val"
                else:
                    assignment[record.record_id] = "train"
    return assignment


# ---------------------------------------------------------------------------
# Aufbau
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecordSpec:
    """Alles, was ein Worker für einen Record braucht"""
    record_id: str
    topology: GraphInstance
    weight_seed: int
    dt: float
    ell: int
    sampled: bool = False


def plan_records(config: DatasetConfig) -> List[RecordSpec]:
    specs = []
    for n in sorted(config.sizes):
        for t, topology in enumerate(enumerate_cubic_topologies(n)):
            for d in range(config.draws_per_topology):
                seed = derive_seed(config.base_seed, _WEIGHT_KEY, n, t, d)
                specs.append(RecordSpec(f"n{n:02d}-t{t:03d}-d{d:02d}", topology, seed, config.dt, config.ell))
    for n_key in sorted(config.sample_sizes, key=int):
        n = int(n_key)
        for k in range(config.sample_sizes[n_key]):
            topology = sample_cubic_topology(n, derive_seed(config.base_seed, _SAMPLE_TOPOLOGY_KEY, n, k))
            seed = derive_seed(config.base_seed, _SAMPLE_WEIGHT_KEY, n, k)
            specs.append(RecordSpec(f"n{n:02d}-s{k:03d}", topology, seed, config.dt, config.ell, sampled=True))
    return specs


def generate_record(spec: RecordSpec) -> DatasetRecord:
    """Gewichte ziehen, FALQON laufen lassen, Monotonie prüfen, Skalare berechnen"""
    instance = assign_weights(spec.topology, spec.weight_seed)
    curve, trajectory = run_falqon(instance, spec.dt, spec.ell)
    violation = monotonic_violation(trajectory)
    if violation > TOLERANCES["monotonic"]:
        raise NumericError(f"Record {spec.record_id}: <H_p> steigt um {violation:.3e} (dt zu groß?)")
    scalars = scalar_features(instance) if instance.n <= MAX_MIDPOINT_GAP_QUBITS else None
    return DatasetRecord(spec.record_id, instance, curve, scalars, sampled=spec.sampled)


class DatasetJournal:
    """journal.jsonl: eine Zeile {record_id, status} pro Ereignis"""

    def __init__(self, directory: str):
        self.path = os.path.join(directory, "journal.jsonl")
        self._lock = threading.Lock()

    def completed(self) -> Dict[str, str]:
        if not os.path.exists(self.path):
            return {}
        status = {}
        for line in read_text(self.path).splitlines():
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError:
                continue  # abgeschnittene letzte Zeile
            status[entry["record_id"]] = entry["status"]
        return {rid: s for rid, s in status.items() if s == "done"}

    def append(self, record_id: str, status: str, message: str = ""):
        entry = {"record_id": record_id, "status": status}
        if message:
            entry["message"] = message
        try:
            with self._lock, open(self.path, "a", encoding="utf-8", newline="\n") as handle:
                handle.write(dumps17(entry) + "\n")
        except OSError as e:
            raise DatasetIOError(f"Journal nicht schreibbar: {e}") from e


def _record_path(directory: str, record_id: str) -> str:
    return os.path.join(directory, "records", f"{record_id}.json")


def save_record(directory: str, record: DatasetRecord):
    write_text(_record_path(directory, record.record_id), dumps17(record.to_dict()) + "\n")


def load_record(directory: str, record_id: str) -> DatasetRecord:
    try:
        return DatasetRecord.from_dict(json.loads(read_text(_record_path(directory, record_id))))
    except json.JSONDecodeError as e:
        raise DatasetIOError(f"Record {record_id} beschädigt: {e}") from e


@dataclass
class Dataset:
    directory: str
    manifest: Dict[str, Any]
    records: List[DatasetRecord]
    standardizer: Standardizer

    def split(self, name: str) -> List[DatasetRecord]:
        return [r for r in self.records if r.split == name]

    @property
    def counts(self) -> Dict[str, Any]:
        return self.manifest["counts"]


def _counts(records: Sequence[DatasetRecord]) -> Dict[str, Any]:
    by_size: Dict[str, Dict[str, int]] = {}
    for record in records:
        entry = by_size.setdefault(str(record.instance.n), {name: 0 for name in SPLITS})
        entry[record.split] += 1
    totals = {name: sum(1 for r in records if r.split == name) for name in SPLITS}
    return {
        "total": len(records),
        **totals,
        "train_val": totals["train"] + totals["val"],
        "by_size": {n: by_size[n] for n in sorted(by_size, key=int)},
    }


def build_dataset(config: DatasetConfig, directory: str, threads: int = 0,
                  command: str = "gen-dataset", show_progress: bool = False) -> Dataset:
    """Erzeugt (oder setzt fort) den Datensatz und schreibt manifest.json"""
    specs = plan_records(config)
    os.makedirs(os.path.join(directory, "records"), exist_ok=True)
    journal = DatasetJournal(directory)
    done = journal.completed()
    todo = [spec for spec in specs
            if not (spec.record_id in done and os.path.exists(_record_path(directory, spec.record_id)))]
    if done:
        logger.info(f"♻️ {len(specs) - len(todo)} Records aus dem Journal übernommen")

    def worker(spec: RecordSpec) -> str:
        try:
            record = generate_record(spec)
            save_record(directory, record)
        except Exception as e:
            journal.append(spec.record_id, "failed", str(e))
            raise
        journal.append(spec.record_id, "done")
        return spec.record_id

    run_batch([(spec.record_id, spec) for spec in todo], worker, threads,
              description="FALQON-Referenzkurven", show_progress=show_progress)

    records = [load_record(directory, spec.record_id) for spec in specs]
    assignment = split_dataset(records, config)
    for record in records:
        record.split = assignment[record.record_id]
    standardizer = fit_standardizer(records)
    for record in records:
        record.scalars_std = apply_standardizer(standardizer, record)

    seeds = {"base_seed": config.base_seed, "split_seed": config.split_seed}
    manifest = {
        "provenance": provenance(command, config.to_dict(), seeds),
        "format_version": DATASET_FORMAT_VERSION,
        "config": config.to_dict(),
        "counts": _counts(records),
        "standardizer": standardizer.to_dict(),
        "records": [
            {
                "record_id": r.record_id,
                "n": r.instance.n,
                "topology_id": r.instance.topology_id,
                "seed": r.instance.seed,
                "split": r.split,
                "file": os.path.join("records", f"{r.record_id}.json"),
                "scalars_std": r.scalars_std.tolist() if r.scalars_std is not None else None,
            }
            for r in records
        ],
    }
    write_text(os.path.join(directory, "manifest.json"), dumps17(manifest) + "\n")
    counts = manifest["counts"]
    logger.info(f"✅ Datensatz: {counts['total']} Records, train+val {counts['train_val']}, test {counts['test']}")
    return Dataset(directory, manifest, records, standardizer)


def load_dataset(directory: str) -> Dataset:
    """Liest manifest.json und alle Record-Dateien"""
    path = os.path.join(directory, "manifest.json")
    try:
        manifest = json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise DatasetIOError(f"manifest.json beschädigt: {e}") from e
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise InvalidArgumentError(f"Unbekanntes Datensatzformat {manifest.get('format_version')!r}")
    records = []
    for entry in manifest["records"]:
        record = load_record(directory, entry["record_id"])
        record.split = entry["split"]
        std = entry.get("scalars_std")
        record.scalars_std = np.array(std, dtype=np.float64) if std is not None else None
        records.append(record)
    return Dataset(directory, manifest, records, Standardizer.from_dict(manifest["standardizer"]))
