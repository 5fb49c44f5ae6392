#!/usr/bin/env python3
"""
Distillations-Loss, Gradienten, Adam und das zweiphasige Training
Phase 1 passt den Teacher an FALQON-Kurven an, Phase 2 friert ihn ein und
trainiert den Student gegen Teacher-Kurven und die Skalare.
"""

import copy
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import torch
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from torch import nn

from config import ADAM_SETTINGS, LOSS_WEIGHTS, TRAIN_SETTINGS
from errors import InvalidArgumentError, NumericError
from graph_instances import derive_seed
from serialization import read_text, write_csv
from surrogate_model import (
    StudentNet,
    SurrogateConfig,
    TeacherNet,
    build_model,
    graph_to_data,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

HISTORY_HEADER = ("epoch", "phase", "train_loss", "val_loss")
TEACHER_LOSS_CHOICE = "distill-terms-without-scalar"
TERMS = ("level", "slope", "curvature", "spectral", "tv", "scalar")


def _as_tensor(curve) -> torch.Tensor:
    if isinstance(curve, torch.Tensor):
        return curve.reshape(-1)
    return torch.as_tensor(np.asarray(curve, dtype=np.float64)).reshape(-1)


# ---------------------------------------------------------------------------
# Loss-Kerne
# ---------------------------------------------------------------------------

def finite_diff1(curve) -> torch.Tensor:
    """(∇β)_j = β_{j+1} - β_j"""
    curve = _as_tensor(curve)
    if curve.numel() < 2:
        raise InvalidArgumentError("finite_diff1 braucht mindestens 2 Werte")
    return curve[1:] - curve[:-1]


def finite_diff2(curve) -> torch.Tensor:
    """β_{j+1} - 2β_j + β_{j-1} für die inneren Punkte"""
    curve = _as_tensor(curve)
    if curve.numel() < 3:
        raise InvalidArgumentError("finite_diff2 braucht mindestens 3 Werte")
    return curve[2:] - 2.0 * curve[1:-1] + curve[:-2]


def spectral_penalty(curve) -> torch.Tensor:
    """Σ_m ω_m^4 |F(β)_m|^2 über alle m mit vorzeichenbehafteter Frequenz

    rfft liefert m = 0..ell/2; die übrigen Bins sind konjugiert gespiegelt
    und gehen über die Verdopplung der inneren Bins ein.
    """
    curve = _as_tensor(curve)
    ell = curve.numel()
    if ell < 1:
        raise InvalidArgumentError("Leere Kurve")
    coeffs = torch.fft.rfft(curve)
    m = torch.arange(coeffs.numel(), dtype=curve.dtype)
    omega = 2.0 * math.pi * m / ell
    multiplicity = torch.full_like(omega, 2.0)
    multiplicity[0] = 1.0
    if ell % 2 == 0:
        multiplicity[-1] = 1.0
    power = coeffs.real ** 2 + coeffs.imag ** 2
    return torch.sum(multiplicity * omega ** 4 * power)


def total_variation(curve) -> torch.Tensor:
    curve = _as_tensor(curve)
    if curve.numel() < 2:
        return curve.sum() * 0.0
    return torch.sum(torch.abs(curve[1:] - curve[:-1]))


@dataclass(frozen=True)
class LossWeights:
    c1: float = LOSS_WEIGHTS["c1"]
    c2: float = LOSS_WEIGHTS["c2"]
    c3: float = LOSS_WEIGHTS["c3"]
    c4: float = LOSS_WEIGHTS["c4"]
    c5: float = LOSS_WEIGHTS["c5"]
    c6: float = LOSS_WEIGHTS["c6"]

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value >= 0.0):
                raise InvalidArgumentError(f"Loss-Gewicht {name}={value} muss endlich und >= 0 sein")

    def as_tuple(self):
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.c6)


@dataclass
class LossBreakdown:
    level: float
    slope: float
    curvature: float
    spectral: float
    tv: float
    scalar: float
    total: torch.Tensor  # differenzierbar

    @property
    def total_value(self) -> float:
        return float(self.total.detach())

    def terms(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in TERMS}

    def weighted_sum(self, weights: LossWeights) -> float:
        return float(sum(c * t for c, t in zip(weights.as_tuple(), (self.level, self.slope, self.curvature,
                                                                     self.spectral, self.tv, self.scalar))))


def _squared_norm(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.sum((a - b) ** 2)


def _curve_terms(candidate: torch.Tensor, target: torch.Tensor) -> List[torch.Tensor]:
    if candidate.numel() != target.numel():
        raise InvalidArgumentError(f"Kurvenlängen verschieden: {candidate.numel()} vs {target.numel()}")
    level = _squared_norm(candidate, target)
    slope = _squared_norm(finite_diff1(candidate), finite_diff1(target)) if candidate.numel() >= 2 else level * 0.0
    curvature = _squared_norm(finite_diff2(candidate), finite_diff2(target)) if candidate.numel() >= 3 else level * 0.0
    return [level, slope, curvature, spectral_penalty(candidate), total_variation(candidate)]


def _breakdown(terms: Sequence[torch.Tensor], weights: LossWeights) -> LossBreakdown:
    total = sum(c * t for c, t in zip(weights.as_tuple(), terms))
    values = [float(t.detach()) for t in terms]
    return LossBreakdown(*values, total=total)


def distill_loss(student_curve, teacher_curve, s_hat, s, weights: Optional[LossWeights] = None) -> LossBreakdown:
    """Unnormierte quadratische Normen; Glättungsterme wirken nur auf die Student-Kurve"""
    weights = weights or LossWeights()
    student_curve, teacher_curve = _as_tensor(student_curve), _as_tensor(teacher_curve)
    s_hat, s = _as_tensor(s_hat), _as_tensor(s)
    if s_hat.numel() != s.numel():
        raise InvalidArgumentError(f"Skalardimension verschieden: {s_hat.numel()} vs {s.numel()}")
    terms = _curve_terms(student_curve, teacher_curve) + [_squared_norm(s_hat, s)]
    return _breakdown(terms, weights)


def teacher_loss(teacher_curve, falqon_curve, weights: Optional[LossWeights] = None) -> LossBreakdown:
    """Wie distill_loss gegen die FALQON-Referenz, ohne Skalarterm"""
    weights = weights or LossWeights()
    candidate = _as_tensor(teacher_curve)
    terms = _curve_terms(candidate, _as_tensor(falqon_curve)) + [candidate.sum() * 0.0]
    return _breakdown(terms, weights)


# ---------------------------------------------------------------------------
# Gradienten und Optimierer
# ---------------------------------------------------------------------------

def _named_parameters(params: Union[nn.Module, Dict[str, torch.Tensor]]) -> Dict[str, torch.Tensor]:
    if isinstance(params, nn.Module):
        return dict(params.named_parameters())
    return dict(params)


def backward(loss: torch.Tensor, params: Union[nn.Module, Dict[str, torch.Tensor]]) -> Dict[str, torch.Tensor]:
    """Reverse-Mode-Gradienten für alle Parameter; unbeteiligte Tensoren bekommen Nullen"""
    named = _named_parameters(params)
    if not torch.isfinite(loss.detach()).all():
        raise NumericError("Loss ist nicht endlich", tensor="loss")
    for tensor in named.values():
        tensor.grad = None
    loss.backward()
    grads = {}
    for name, tensor in named.items():
        grad = tensor.grad if tensor.grad is not None else torch.zeros_like(tensor)
        if not torch.isfinite(grad).all():
            raise NumericError(f"Nicht-endlicher Gradient in '{name}'", tensor=name)
        grads[name] = grad
    return grads


def make_optimizer(params: Union[nn.Module, Dict[str, torch.Tensor]], lr: float = ADAM_SETTINGS["lr"]) -> torch.optim.Adam:
    return torch.optim.Adam(
        list(_named_parameters(params).values()),
        lr=lr,
        betas=(ADAM_SETTINGS["beta1"], ADAM_SETTINGS["beta2"]),
        eps=ADAM_SETTINGS["eps"],
    )


def adam_step(params: Union[nn.Module, Dict[str, torch.Tensor]], grads: Dict[str, torch.Tensor],
              optimizer: torch.optim.Adam):
    """Ein Adam-Schritt mit Bias-Korrektur; der Optimierer hält die Momente"""
    named = _named_parameters(params)
    for name, tensor in named.items():
        grad = grads.get(name)
        if grad is None:
            grad = torch.zeros_like(tensor)
        if grad.shape != tensor.shape:
            raise InvalidArgumentError(f"Gradient für '{name}' hat Form {tuple(grad.shape)}, erwartet {tuple(tensor.shape)}")
        tensor.grad = grad
    optimizer.step()


# ---------------------------------------------------------------------------
# Trainingskonfiguration und Protokoll
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    seed: int = TRAIN_SETTINGS["seed"]
    epochs: int = TRAIN_SETTINGS["epochs"]
    lr: float = ADAM_SETTINGS["lr"]
    batch_size: int = TRAIN_SETTINGS["batch_size"]
    loss_weights: Dict[str, float] = field(default_factory=lambda: dict(LOSS_WEIGHTS))
    model: Dict[str, int] = field(default_factory=lambda: SurrogateConfig().to_dict())
    dataset: str = ""
    output_dir: str = "output/model"

    def __post_init__(self):
        if int(self.epochs) < 0:
            raise InvalidArgumentError(f"epochs muss >= 0 sein, nicht {self.epochs}")
        if int(self.batch_size) != 1:
            raise InvalidArgumentError("Nur batch_size = 1 (Überwachung pro Graph) wird unterstützt")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise InvalidArgumentError(f"lr muss positiv sein, nicht {self.lr}")
        self.weights()
        self.model_config()

    def weights(self) -> LossWeights:
        unknown = set(self.loss_weights) - set(LOSS_WEIGHTS)
        if unknown:
            raise InvalidArgumentError(f"Unbekannte Loss-Gewichte: {sorted(unknown)}")
        return LossWeights(**{k: float(v) for k, v in self.loss_weights.items()})

    def model_config(self) -> SurrogateConfig:
        return SurrogateConfig.from_dict(self.model)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"Unbekannte Trainingsparameter: {sorted(unknown)}")
        merged = cls().to_dict()
        for key, value in data.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value
        return cls(**merged)

    @classmethod
    def load(cls, path: str) -> "TrainConfig":
        try:
            return cls.from_dict(json.loads(read_text(path)))
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"Trainingskonfiguration ist kein JSON: {e}") from e


@dataclass
class HistoryEntry:
    epoch: int
    phase: str
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    teacher_path: str
    student_path: str
    best_teacher_path: str
    best_student_path: str
    history: List[HistoryEntry]
    teacher: TeacherNet
    student: StudentNet


def save_history(path: str, history: Sequence[HistoryEntry], prov: Optional[Dict] = None):
    rows = [[h.epoch, h.phase, float(h.train_loss), float(h.val_loss)] for h in history]
    write_csv(path, HISTORY_HEADER, rows, prov)


class _Example:
    """Vorbereitete Trainingsinstanz (Graphdaten, Ziel, Skalare)"""

    def __init__(self, record):
        self.record_id = record.record_id
        self.data = graph_to_data(record.instance)
        self.target = torch.as_tensor(np.asarray(record.reference_curve.betas, dtype=np.float64))
        if record.scalars_std is None:
            raise InvalidArgumentError(f"Datensatz {record.record_id} hat keine standardisierten Skalare")
        self.scalars = torch.as_tensor(np.asarray(record.scalars_std, dtype=np.float64))


class Trainer:
    """Teacher-dann-Student-Training mit Checkpoint pro Epoche"""

    def __init__(self, config: TrainConfig, prov: Optional[Dict] = None, show_progress: bool = False):
        self.config = config
        self.weights = config.weights()
        self.model_config = config.model_config()
        self.prov = prov or {}
        self.show_progress = show_progress
        self.rng = np.random.Generator(np.random.Philox(int(config.seed)))
        self.history: List[HistoryEntry] = []
        os.makedirs(config.output_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.config.output_dir, name)

    def _metadata(self, phase: str, epoch: int) -> Dict[str, Any]:
        return {
            "phase": phase,
            "epoch": epoch,
            "teacher_loss": TEACHER_LOSS_CHOICE,
            "train_config": self.config.to_dict(),
            "provenance": self.prov,
        }

    def _prepare(self, records) -> Dict[str, List[_Example]]:
        splits = {"train": [], "val": []}
        for record in sorted(records, key=lambda r: r.record_id):
            if record.split in splits:
                example = _Example(record)
                if example.target.numel() != self.model_config.ell:
                    raise InvalidArgumentError(
                        f"Kurvenlänge {example.target.numel()} passt nicht zu ell={self.model_config.ell}")
                if example.scalars.numel() != self.model_config.scalar_dim:
                    raise InvalidArgumentError(f"Skalardimension {example.scalars.numel()} passt nicht zum Modell")
                splits[record.split].append(example)
        if not splits["train"]:
            raise InvalidArgumentError("Datensatz enthält keine Trainingsinstanzen")
        return splits

    def _teacher_loss(self, teacher: TeacherNet, example: _Example) -> LossBreakdown:
        return teacher_loss(teacher(example.data, example.scalars), example.target, self.weights)

    def _student_loss(self, student: StudentNet, example: _Example, teacher_curve: torch.Tensor) -> LossBreakdown:
        curve, s_hat = student(example.data)
        return distill_loss(curve, teacher_curve, s_hat, example.scalars, self.weights)

    def _run_phase(self, phase: str, model: nn.Module, loss_fn, train: List[_Example], val: List[_Example]):
        name = phase
        last_path, best_path = self._path(f"{name}.json"), self._path(f"{name}_best.json")
        save_checkpoint(last_path, model, self._metadata(phase, 0))
        save_checkpoint(best_path, model, self._metadata(phase, 0))
        last_good = copy.deepcopy(model.state_dict())
        best_val = math.inf
        optimizer = make_optimizer(model, self.config.lr)

        progress = Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), BarColumn(),
                            disable=not self.show_progress, transient=True)
        with progress:
            task = progress.add_task(f"Training {phase}...", total=self.config.epochs)
            for epoch in range(1, self.config.epochs + 1):
                order = self.rng.permutation(len(train))
                model.train()
                losses = []
                for index in order:
                    breakdown = loss_fn(train[int(index)])
                    try:
                        grads = backward(breakdown.total, model)
                    except NumericError:
                        model.load_state_dict(last_good)
                        save_checkpoint(last_path, model, self._metadata(phase, epoch - 1))
                        logger.error(f"❌ Nicht-endlicher Loss in {phase}, Epoche {epoch}; letzter guter Stand gesichert")
                        raise
                    adam_step(model, grads, optimizer)
                    losses.append(breakdown.total_value)

                model.eval()
                with torch.no_grad():
                    val_losses = [loss_fn(example).total_value for example in val]
                train_loss = float(np.mean(losses))
                val_loss = float(np.mean(val_losses)) if val_losses else math.nan
                self.history.append(HistoryEntry(epoch, phase, train_loss, val_loss))

                last_good = copy.deepcopy(model.state_dict())
                save_checkpoint(last_path, model, self._metadata(phase, epoch))
                criterion = val_loss if val_losses else train_loss
                if criterion < best_val:
                    best_val = criterion
                    save_checkpoint(best_path, model, self._metadata(phase, epoch))
                logger.info(f"📊 {phase} Epoche {epoch}/{self.config.epochs}: train={train_loss:.6g} val={val_loss:.6g}")
                progress.update(task, description=f"{phase}: Epoche {epoch} (train {train_loss:.4g})")
                progress.advance(task)
        return last_path, best_path

    def fit(self, records) -> TrainResult:
        splits = self._prepare(records)
        seed = int(self.config.seed)
        teacher = build_model("teacher", self.model_config, seed=derive_seed(seed, 1) % (2 ** 63))
        student = build_model("student", self.model_config, seed=derive_seed(seed, 2) % (2 ** 63))

        logger.info(f"🚀 Phase 1: Teacher auf {len(splits['train'])} Instanzen")
        teacher_path, best_teacher = self._run_phase(
            "teacher", teacher, lambda ex: self._teacher_loss(teacher, ex), splits["train"], splits["val"])

        teacher.eval()
        teacher.requires_grad_(False)
        with torch.no_grad():
            targets = {ex.record_id: teacher(ex.data, ex.scalars).detach()
                       for ex in splits["train"] + splits["val"]}

        logger.info("🚀 Phase 2: Student gegen eingefrorenen Teacher")
        student_path, best_student = self._run_phase(
            "student", student, lambda ex: self._student_loss(student, ex, targets[ex.record_id]),
            splits["train"], splits["val"])

        save_history(self._path("loss_history.csv"), self.history, self.prov)
        return TrainResult(teacher_path, student_path, best_teacher, best_student, list(self.history), teacher, student)


def train(records, config: TrainConfig, prov: Optional[Dict] = None, show_progress: bool = False) -> TrainResult:
    """Trainiert Teacher und Student; Checkpoints und loss_history.csv landen in config.output_dir"""
    if not records:
        raise InvalidArgumentError("Leerer Datensatz")
    return Trainer(config, prov, show_progress).fit(records)
