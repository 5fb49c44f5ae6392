"""
Textformate mit 17 signifikanten Stellen und Provenienz-Header
Alle Dateien des Projekts werden hierüber geschrieben, damit identische
Eingaben byte-identische Ausgaben ergeben.
"""

import csv
import io
import json
import math
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

from config import TOOL_NAME, TOOL_VERSION
from errors import DatasetIOError


def fmt17(value: float) -> str:
    """Gleitkommazahl mit 17 signifikanten Stellen (NaN -> 'nan')"""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if value == 0.0:
        value = 0.0  # kein "-0"
    return f"{value:.17g}"


def dumps17(obj: Any) -> str:
    """Kompaktes JSON, Floats mit 17 signifikanten Stellen, Schlüsselreihenfolge wie übergeben"""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return fmt17(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k), ensure_ascii=False)}:{dumps17(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps17(v) for v in obj) + "]"
    # numpy-Skalare und Arrays
    if hasattr(obj, "tolist"):
        return dumps17(obj.tolist())
    raise TypeError(f"Nicht serialisierbar: {type(obj).__name__}")


def provenance(command: str, config: Dict[str, Any], seeds: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Provenienz-Block: Werkzeugversion, Konfigurations-Echo, Seeds"""
    return {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "command": command,
        "config": config,
        "seeds": seeds or {},
    }


def provenance_comment(prov: Optional[Dict[str, Any]]) -> str:
    return f"# provenance {dumps17(prov)}" if prov else ""


def write_text(path: str, text: str):
    """Schreibt UTF-8 mit '\\n'-Zeilenenden; legt Verzeichnisse an"""
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as e:
        raise DatasetIOError(f"Schreiben fehlgeschlagen: {path}: {e}") from e


def read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as e:
        raise DatasetIOError(f"Lesen fehlgeschlagen: {path}: {e}") from e


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]],
              prov: Optional[Dict[str, Any]] = None):
    """CSV mit optionaler Provenienz-Kommentarzeile vor der Kopfzeile"""
    buffer = io.StringIO()
    if prov:
        buffer.write(provenance_comment(prov) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt17(cell) if isinstance(cell, float) or hasattr(cell, "dtype") else str(cell)
                         for cell in row])
    write_text(path, buffer.getvalue())


def read_csv(path: str) -> List[Dict[str, str]]:
    """Liest CSV ohne Kommentarzeilen als Liste von Dicts"""
    lines = [line for line in read_text(path).splitlines() if line and not line.startswith("#")]
    return list(csv.DictReader(lines))
