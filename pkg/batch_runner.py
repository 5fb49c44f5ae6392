#!/usr/bin/env python3
"""
Batch-Runner - verteilt Instanzen auf einen begrenzten Worker-Pool
Ergebnisse werden unabhängig von der Fertigstellungsreihenfolge nach ID
zusammengeführt.
"""

import logging
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from typing import Callable, Dict, Generic, Optional, Sequence, Tuple, TypeVar

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn

from config import effective_threads
from errors import InvalidArgumentError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class BatchRunner(Generic[T, R]):
    """Führt eine Funktion über (id, Eingabe)-Paare aus; threads = 1 läuft seriell"""

    def __init__(self, worker: Callable[[T], R], threads: int = 0, description: str = "Verarbeite Instanzen",
                 console: Optional[Console] = None, show_progress: bool = True):
        self.worker = worker
        self.threads = effective_threads(threads)
        self.description = description
        self.console = console
        self.show_progress = show_progress

    def _progress(self) -> Progress:
        return Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            console=self.console,
            disable=not self.show_progress,
            transient=True,
        )

    def run(self, items: Sequence[Tuple[str, T]]) -> Dict[str, R]:
        """Liefert {id: Ergebnis} in aufsteigender ID-Reihenfolge; der erste Fehler bricht ab"""
        ids = [item_id for item_id, _ in items]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("Doppelte IDs im Batch")
        results: Dict[str, R] = {}
        if not items:
            return results

        logger.info(f"🔄 {self.description}: {len(items)} Aufgaben, {self.threads} Thread(s)")
        with self._progress() as progress:
            task = progress.add_task(self.description, total=len(items))
            if self.threads == 1:
                for item_id, payload in items:
                    results[item_id] = self.worker(payload)
                    progress.advance(task)
            else:
                self._run_pool(items, results, progress, task)

        return {item_id: results[item_id] for item_id in sorted(results)}

    def _run_pool(self, items, results, progress, task):
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            pending = {pool.submit(self.worker, payload): item_id for item_id, payload in items}
            while pending:
                done, _ = wait(list(pending), return_when=FIRST_EXCEPTION)
                for future in done:
                    item_id = pending.pop(future)
                    error = future.exception()
                    if error is not None:
                        logger.error(f"❌ Aufgabe {item_id} fehlgeschlagen: {error}")
                        for other in pending:
                            other.cancel()
                        raise error
                    results[item_id] = future.result()
                    progress.advance(task)


def run_batch(items: Sequence[Tuple[str, T]], worker: Callable[[T], R], threads: int = 0,
              description: str = "Verarbeite Instanzen", show_progress: bool = False) -> Dict[str, R]:
    return BatchRunner(worker, threads, description, show_progress=show_progress).run(items)
