#!/usr/bin/env python3
"""
Teacher- und Student-Netz für FALQON-Parameterkurven
Encoder (GINE bzw. Graph-Transformer), Multi-Pooling, hypernetzwerk-
konditionierte Teacher-Ausgabe und Student mit Hilfsskalar-Kopf.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch_geometric.data import Data
from torch_geometric.nn import (
    GINEConv,
    TransformerConv,
    global_add_pool,
    global_max_pool,
    global_mean_pool,
)
from torch_geometric.nn.aggr import AttentionalAggregation, Set2Set

from config import CHECKPOINT_FORMAT_VERSION, MODEL_SETTINGS, TOLERANCES
from errors import DatasetIOError, InvalidArgumentError
from graph_instances import GraphInstance
from serialization import dumps17, read_text, write_text

logger = logging.getLogger(__name__)

VARIANTS = ("teacher", "student")
POOL_WIDTH = 6  # mean, sum, max, attention (je d) + Set2Set (2d)


@dataclass
class SurrogateConfig:
    """Architektur-Parameter; reduzierte Werte (z.B. hidden=8, ell=32) für Tests"""
    hidden: int = MODEL_SETTINGS["hidden"]
    hyper_hidden: int = MODEL_SETTINGS["hyper_hidden"]
    ell: int = MODEL_SETTINGS["ell"]
    mp_layers: int = MODEL_SETTINGS["mp_layers"]
    heads: int = MODEL_SETTINGS["heads"]
    set2set_steps: int = MODEL_SETTINGS["set2set_steps"]
    scalar_dim: int = MODEL_SETTINGS["scalar_dim"]

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) < 1:
                raise InvalidArgumentError(f"{name} muss >= 1 sein, nicht {value}")
        if self.hidden % self.heads != 0:
            raise InvalidArgumentError(f"hidden={self.hidden} nicht durch heads={self.heads} teilbar")

    @property
    def summary_dim(self) -> int:
        return POOL_WIDTH * self.hidden

    def to_dict(self) -> Dict[str, int]:
        return {k: int(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SurrogateConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"Unbekannte Modell-Parameter: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in data.items()})


@dataclass
class CurvePrediction:
    values: np.ndarray
    producer: str
    aux_scalars: Optional[np.ndarray] = None


def graph_to_data(instance: GraphInstance) -> Data:
    """Konstantes Knotenmerkmal 1, beide Kantenrichtungen mit Gewicht als Kantenattribut"""
    src, dst, attr = [], [], []
    for u, v, w in instance.edges:
        src += [u, v]
        dst += [v, u]
        attr += [w, w]
    edge_index = torch.tensor([src, dst], dtype=torch.long).reshape(2, -1)
    edge_attr = torch.tensor(attr, dtype=torch.float64).reshape(-1, 1)
    x = torch.ones((instance.n, 1), dtype=torch.float64)
    return Data(x=x, edge_index=edge_index, edge_attr=edge_attr, num_nodes=instance.n)


def _batch_vector(data: Data) -> torch.Tensor:
    batch = getattr(data, "batch", None)
    if batch is None:
        batch = torch.zeros(data.num_nodes, dtype=torch.long)
    return batch


class NodeEncoder(nn.Module):
    """Drei Message-Passing-Blöcke mit ReLU dazwischen"""

    def __init__(self, config: SurrogateConfig, variant: str):
        super().__init__()
        if variant not in VARIANTS:
            raise InvalidArgumentError(f"Unbekannte Variante '{variant}'")
        d = config.hidden
        self.variant = variant
        self.node_embed = nn.Linear(1, d)
        self.edge_embed = nn.Linear(1, d)
        self.convs = nn.ModuleList()
        self.mixes = nn.ModuleList()
        for _ in range(config.mp_layers):
            if variant == "teacher":
                mlp = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, d))
                self.convs.append(GINEConv(mlp, train_eps=True))
            else:
                width = d // config.heads
                self.convs.append(TransformerConv(d, width, heads=config.heads, edge_dim=d))
                self.mixes.append(nn.Linear(width * config.heads, d))

    def forward(self, data: Data) -> torch.Tensor:
        if data.x.shape[1] != 1 or data.edge_attr.shape[1] != 1:
            raise InvalidArgumentError(f"Erwarte je ein Knoten- und Kantenmerkmal, nicht {tuple(data.x.shape)}/{tuple(data.edge_attr.shape)}")
        h = self.node_embed(data.x)
        e = self.edge_embed(data.edge_attr)
        last = len(self.convs) - 1
        for k, conv in enumerate(self.convs):
            h = conv(h, data.edge_index, e)
            if self.variant == "student":
                h = self.mixes[k](h)
            if k < last:
                h = F.relu(h)
        return h


class MultiPool(nn.Module):
    """z = [mean; sum; max; attention; Set2Set]"""

    def __init__(self, config: SurrogateConfig):
        super().__init__()
        d = config.hidden
        self.attention = AttentionalAggregation(gate_nn=nn.Linear(d, 1), nn=nn.Linear(d, d))
        self.set2set = Set2Set(d, processing_steps=config.set2set_steps)

    def forward(self, h: torch.Tensor, batch: torch.Tensor) -> torch.Tensor:
        if h.shape[0] < 1:
            raise InvalidArgumentError("Pooling braucht mindestens einen Knoten")
        return torch.cat([
            global_mean_pool(h, batch),
            global_add_pool(h, batch),
            global_max_pool(h, batch),
            self.attention(h, batch),
            self.set2set(h, batch),
        ], dim=-1)


class TeacherNet(nn.Module):
    """Stufe I wird vom Hypernetzwerk aus s erzeugt, Stufe II ist statisch"""

    def __init__(self, config: SurrogateConfig):
        super().__init__()
        self.config = config
        d, zdim = config.hidden, config.summary_dim
        self.encoder = NodeEncoder(config, "teacher")
        self.pool = MultiPool(config)
        self.hyper = nn.Sequential(
            nn.Linear(config.scalar_dim, config.hyper_hidden),
            nn.ReLU(),
            nn.Linear(config.hyper_hidden, d * zdim + d),
        )
        self.stage2 = nn.Linear(d, config.ell)

    def forward(self, data: Data, s: torch.Tensor) -> torch.Tensor:
        d, zdim = self.config.hidden, self.config.summary_dim
        s = s.reshape(-1)
        if s.numel() != self.config.scalar_dim:
            raise InvalidArgumentError(f"Erwarte {self.config.scalar_dim} Skalare, nicht {s.numel()}")
        z = self.pool(self.encoder(data), _batch_vector(data)).reshape(-1)
        generated = self.hyper(s)
        weight = generated[: d * zdim].reshape(d, zdim)
        bias = generated[d * zdim:]
        hidden = F.relu(weight @ z + bias)
        return self.stage2(hidden)


class StudentNet(nn.Module):
    """Braucht zur Inferenz nur den Graphen; ŝ wird mitgeschätzt"""

    def __init__(self, config: SurrogateConfig):
        super().__init__()
        self.config = config
        d, zdim = config.hidden, config.summary_dim
        self.encoder = NodeEncoder(config, "student")
        self.pool = MultiPool(config)
        self.scalar_head = nn.Sequential(nn.Linear(zdim, d), nn.ReLU(), nn.Linear(d, config.scalar_dim))
        self.curve_head = nn.Sequential(nn.Linear(zdim + config.scalar_dim, d), nn.ReLU(), nn.Linear(d, config.ell))

    def forward(self, data: Data) -> Tuple[torch.Tensor, torch.Tensor]:
        z = self.pool(self.encoder(data), _batch_vector(data)).reshape(-1)
        s_hat = self.scalar_head(z)
        curve = self.curve_head(torch.cat([z, s_hat]))
        return curve, s_hat


def build_model(variant: str, config: Optional[SurrogateConfig] = None, seed: int = 0) -> nn.Module:
    """Fan-in-skalierte Gleichverteilung (torch-Standard) für Gewichte, Bias = 0"""
    config = config or SurrogateConfig()
    if variant not in VARIANTS:
        raise InvalidArgumentError(f"Unbekannte Variante '{variant}'")
    torch.manual_seed(int(seed))
    model = TeacherNet(config) if variant == "teacher" else StudentNet(config)
    model = model.double()
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.rsplit(".", 1)[-1].startswith("bias"):
                param.zero_()
    return model


def encode_nodes(instance: GraphInstance, model: nn.Module) -> torch.Tensor:
    with torch.no_grad():
        return model.encoder(graph_to_data(instance))


def pool(h: torch.Tensor, model: nn.Module) -> torch.Tensor:
    with torch.no_grad():
        return model.pool(h, torch.zeros(h.shape[0], dtype=torch.long)).reshape(-1)


def teacher_forward(instance: GraphInstance, s, model: TeacherNet) -> CurvePrediction:
    s = torch.as_tensor(np.asarray(s, dtype=np.float64))
    limit = TOLERANCES["unstandardized_scalar"]
    if torch.any(torch.abs(s) > limit):
        logger.warning(f"⚠️ Skalare mit |s| > {limit:g} - sind sie standardisiert?")
    with torch.no_grad():
        curve = model(graph_to_data(instance), s)
    return CurvePrediction(curve.numpy().copy(), "teacher")


def student_forward(instance: GraphInstance, model: StudentNet) -> CurvePrediction:
    with torch.no_grad():
        curve, s_hat = model(graph_to_data(instance))
    return CurvePrediction(curve.numpy().copy(), "student", s_hat.numpy().copy())


# ---------------------------------------------------------------------------
# Parameter-Übersicht und Checkpoints
# ---------------------------------------------------------------------------

def parameter_count(model: nn.Module) -> int:
    return int(sum(p.numel() for p in model.parameters()))


def parameter_groups(model: nn.Module) -> List[Tuple[str, int]]:
    """Parameterzahl je Untermodul in Definitionsreihenfolge"""
    return [(name, int(sum(p.numel() for p in child.parameters())))
            for name, child in model.named_children()]


@dataclass
class Checkpoint:
    variant: str
    config: SurrogateConfig
    state: Dict[str, torch.Tensor]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def build(self) -> nn.Module:
        model = build_model(self.variant, self.config)
        model.load_state_dict(self.state, strict=True)
        return model


def _blob_path(manifest_path: str) -> str:
    root, _ = os.path.splitext(manifest_path)
    return root + ".bin"


def save_checkpoint(path: str, model: nn.Module, metadata: Optional[Dict[str, Any]] = None):
    """JSON-Manifest plus little-endian float64-Blob (<path ohne .json>.bin)"""
    variant = "teacher" if isinstance(model, TeacherNet) else "student"
    tensors = []
    chunks = []
    offset = 0
    for name, tensor in model.state_dict().items():
        array = tensor.detach().cpu().numpy().astype("<f8")
        tensors.append({"name": name, "shape": list(array.shape), "offset": offset, "dtype": "float64"})
        chunks.append(array.tobytes(order="C"))
        offset += array.nbytes
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "variant": variant,
        "architecture": model.config.to_dict(),
        "parameter_count": parameter_count(model),
        "blob": os.path.basename(_blob_path(path)),
        "metadata": metadata or {},
        "tensors": tensors,
    }
    write_text(path, dumps17(manifest) + "\n")
    try:
        with open(_blob_path(path), "wb") as handle:
            handle.write(b"".join(chunks))
    except OSError as e:
        raise DatasetIOError(f"Checkpoint-Blob nicht schreibbar: {e}") from e


def load_checkpoint(path: str) -> Checkpoint:
    try:
        manifest = json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise InvalidArgumentError(f"Checkpoint-Manifest ist kein JSON: {e}") from e
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise InvalidArgumentError(f"Unbekanntes Checkpoint-Format {manifest.get('format_version')!r}")
    blob_path = os.path.join(os.path.dirname(os.path.abspath(path)), manifest["blob"])
    try:
        with open(blob_path, "rb") as handle:
            blob = handle.read()
    except OSError as e:
        raise DatasetIOError(f"Checkpoint-Blob nicht lesbar: {e}") from e
    state = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        array = np.frombuffer(blob, dtype="<f8", count=count, offset=int(entry["offset"]))
        state[entry["name"]] = torch.from_numpy(array.astype(np.float64).reshape(entry["shape"]))
    return Checkpoint(manifest["variant"], SurrogateConfig.from_dict(manifest["architecture"]),
                      state, manifest.get("metadata", {}))
