"""
Konfigurationsdatei für den FALQON-Kurven-Surrogat
Hier können Sie Simulations-, Modell- und Trainingseinstellungen anpassen.
"""

import os
from typing import Dict, Any

from dotenv import load_dotenv

TOOL_NAME = "falqon-surrogate"
TOOL_VERSION = "1.0"

# Versionsstrings für persistierte Formate
FEATURE_FORMAT_VERSION = "scalars-v1:|V|,E_min,gap_problem,gap_midpoint,sqrt|V|,ln|V|"
CHECKPOINT_FORMAT_VERSION = "ckpt-v1"
DATASET_FORMAT_VERSION = "dataset-v1"

# Standard-Einstellungen für Simulation und Datensatz
DEFAULT_SETTINGS = {
    "dt": 0.01,
    "ell": 1001,
    "sizes": (4, 6, 8, 10, 12),
    "draws_per_topology": 20,
    "base_seed": 20240607,
    "split_seed": 7,
    "test_fraction": 0.4,
    "val_fraction": 0.2,
    "threads": 0,  # 0 = alle verfügbaren Kerne
    "output_dir": "output",
    "log_level": "INFO",
    "log_file": "",
}

# Architektur (Teacher fest, Student gespiegelt)
MODEL_SETTINGS = {
    "hidden": 96,
    "hyper_hidden": 224,
    "ell": 1001,
    "mp_layers": 3,
    "heads": 4,
    "set2set_steps": 3,
    "scalar_dim": 6,
}

# Gewichte der Distillations-Loss (c6 ist nicht veröffentlicht)
LOSS_WEIGHTS = {
    "c1": 1.9700633,      # level match
    "c2": 0.3553681,      # slope match
    "c3": 1.7610852,      # curvature match
    "c4": 8.7863e-2,      # spectral penalty
    "c5": 5.5548618e-1,   # total variation
    "c6": 1.0,            # auxiliary scalar head
}

ADAM_SETTINGS = {
    "lr": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
}

TRAIN_SETTINGS = {
    "epochs": 100,
    "batch_size": 1,
    "seed": 1234,
}

TOLERANCES = {
    "tol_rel": 1e-12,          # Entartung von Grundzuständen / Distinktheit
    "krylov_tol": 1e-10,
    "krylov_maxiter": 300,
    "monotonic": 1e-9,         # erlaubter Anstieg von <H_p> pro Layer
    "unstandardized_scalar": 10.0,
}

# Größengrenzen
MAX_SIMULATION_QUBITS = 24
MAX_MIDPOINT_GAP_QUBITS = 14
MAX_EXHAUSTIVE_VERTICES = 12
DENSE_EIGEN_MAX_DIM = 64

# Exit-Codes der Kommandozeile
EXIT_CODES = {
    "ok": 0,
    "invalid-argument": 2,
    "io": 3,
    "numeric": 4,
}

# Umgebungsvariablen, die DEFAULT_SETTINGS überschreiben
ENV_OVERRIDES = {
    "FALQON_OUTPUT_DIR": ("output_dir", str),
    "FALQON_THREADS": ("threads", int),
    "FALQON_LOG_FILE": ("log_file", str),
    "FALQON_LOG_LEVEL": ("log_level", str),
}


def load_settings() -> Dict[str, Any]:
    """Lädt .env / .env.local und liefert die effektiven Einstellungen"""
    load_dotenv()
    load_dotenv('.env.local', override=True)  # Lokale Einstellungen mit höherer Priorität

    settings = dict(DEFAULT_SETTINGS)
    for env_name, (key, cast) in ENV_OVERRIDES.items():
        value = os.getenv(env_name)
        if value is None or value.strip() == "":
            continue
        try:
            settings[key] = cast(value.strip())
        except ValueError:
            # Ungültige Werte werden ignoriert, der Standard bleibt aktiv
            continue
    return settings


def effective_threads(requested: int) -> int:
    """0 oder negativ bedeutet: verfügbare Parallelität"""
    if requested and requested > 0:
        return int(requested)
    return max(1, os.cpu_count() or 1)
