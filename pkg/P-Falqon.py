#!/usr/bin/env python3
"""
FALQON-Kurven-Surrogat - Kommandozeile
Erzeugt Graphen und Datensätze, trainiert Teacher/Student, sagt Kurven voraus
und vergleicht sie mit FALQON, der ungewichteten Baseline und linearem Annealing.

Author: FALQON-Surrogat-Team
Version: 1.0
"""

import argparse
import glob
import json
import logging
import os
import sys
import time
from collections import defaultdict
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from batch_runner import run_batch
from config import EXIT_CODES, TOOL_NAME, TOOL_VERSION, effective_threads, load_settings
from dataset_pipeline import DatasetConfig, build_dataset, load_dataset
from errors import FalqonError, InvalidArgumentError
from graph_instances import (
    GraphInstance,
    assign_weights,
    derive_seed,
    enumerate_cubic_topologies,
    sample_cubic_topology,
)
from hamiltonian import build_problem_diagonal
from metrics import DEVIATION_METRICS, aggregate, aggregate_deviations, deviations
from schedules import ParameterCurve, linear_schedule, replay_curve, run_falqon, unweighted_baseline
from serialization import provenance, write_csv
from surrogate_model import load_checkpoint, parameter_count, parameter_groups, student_forward
from training import TrainConfig, train

logger = logging.getLogger("falqon")

EVALUATE_MODES = ("self", "files", "baseline", "surrogate")
DEVIATION_HEADER = ("layer", "d_beta", "d_approx_ratio", "d_success_prob")
EQUAL_LAYER_HEADER = ("layer", "falqon_r_A", "falqon_phi", "linear_r_A", "linear_phi", "candidate_r_A", "candidate_phi")
SUMMARY_HEADER = ("method", "n", "count", "final_r_A_mean", "final_r_A_std", "final_phi_mean", "final_phi_std",
                  "mean_d_beta", "mean_d_approx_ratio", "mean_d_success_prob")


class _ArgumentParser(argparse.ArgumentParser):
    """Argumentfehler laufen über die gemeinsame Fehlerzeile statt sys.exit"""

    def error(self, message):
        raise InvalidArgumentError(message)


def setup_logging(level: str = "INFO", log_file: str = ""):
    handlers: List[logging.Handler] = [RichHandler(console=Console(stderr=True), show_path=False)]
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(message)s',
        handlers=handlers,
        force=True,
    )


def _collect_instances(path: str) -> List[Tuple[str, GraphInstance]]:
    """Eine Instanzdatei oder alle *.json eines Verzeichnisses, nach Dateiname sortiert"""
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.json")))
        if not files:
            raise InvalidArgumentError(f"Keine Instanzdateien in {path}")
    elif os.path.isfile(path):
        files = [path]
    else:
        raise InvalidArgumentError(f"Eingabe nicht gefunden: {path}")
    return [(os.path.splitext(os.path.basename(f))[0], GraphInstance.load(f)) for f in files]


def _check_dt_ell(dt: float, ell: int):
    if not dt > 0:
        raise InvalidArgumentError(f"--dt muss positiv sein, nicht {dt}")
    if ell < 1:
        raise InvalidArgumentError(f"--ell muss >= 1 sein, nicht {ell}")


class FalqonApp:
    """Hauptklasse der Kommandozeile"""

    def __init__(self, settings: Optional[Dict[str, Any]] = None):
        self.settings = settings or load_settings()
        self.console = Console()

    def _print(self, message: str, style: str = None):
        """Hilfsfunktion für Ausgabe mit Rich"""
        self.console.print(message, style=style)

    def _threads(self, args) -> int:
        requested = args.threads if getattr(args, "threads", None) is not None else self.settings["threads"]
        return effective_threads(requested)

    def _out_dir(self, args, default_name: str) -> str:
        out = args.out or os.path.join(self.settings["output_dir"], default_name)
        os.makedirs(out, exist_ok=True)
        return out

    @staticmethod
    def _prov(args, seeds: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        echo = {k: v for k, v in sorted(vars(args).items()) if k not in ("handler", "threads")}
        return provenance(args.command, echo, seeds)

    # ------------------------------------------------------------------
    # gen-graphs
    # ------------------------------------------------------------------
    def cmd_gen_graphs(self, args) -> int:
        count = 0 if args.count is None else args.count
        if count < 0 or (args.draws is not None and args.draws < 0):
            raise InvalidArgumentError("--count und --draws müssen >= 0 sein")
        if args.mode == "sample":
            if count < 1:
                raise InvalidArgumentError("--mode sample braucht --count >= 1 (Anzahl Topologien)")
            topologies = [sample_cubic_topology(args.n, derive_seed(args.seed, 1, args.n, k)) for k in range(count)]
            draws = args.draws or 0
        else:
            if args.draws is not None:
                raise InvalidArgumentError("--draws gilt nur für --mode sample; exhaustiv zählt --count die Ziehungen")
            topologies = enumerate_cubic_topologies(args.n)
            draws = count
        out = self._out_dir(args, f"graphs_n{args.n}")
        prov = self._prov(args, {"seed": args.seed})
        tag = "s" if args.mode == "sample" else "t"
        written = 0
        for t, topology in enumerate(topologies):
            stem = f"n{args.n:02d}-{tag}{t:03d}"
            if draws == 0:
                topology.save(os.path.join(out, f"{stem}.json"), prov)
                written += 1
                continue
            for d in range(draws):
                instance = assign_weights(topology, derive_seed(args.seed, 0, args.n, t, d))
                instance.save(os.path.join(out, f"{stem}-d{d:02d}.json"), prov)
                written += 1
        self._print(f"✅ {len(topologies)} Topologien, {written} Instanzdateien in {out}", "green")
        return EXIT_CODES["ok"]

    # ------------------------------------------------------------------
    # gen-dataset
    # ------------------------------------------------------------------
    def cmd_gen_dataset(self, args) -> int:
        config = DatasetConfig.load(args.config) if args.config else DatasetConfig()
        if args.split_by_topology:
            config.split_by_topology = True
        out = self._out_dir(args, "dataset")
        self._print("🚀 Erzeuge Datensatz...", "bold green")
        dataset = build_dataset(config, out, self._threads(args), show_progress=True)

        table = Table(title="📊 Datensatz")
        for column in ("n", "train", "val", "test"):
            table.add_column(column, style="cyan" if column == "n" else "white")
        for n, counts in dataset.counts["by_size"].items():
            table.add_row(n, str(counts["train"]), str(counts["val"]), str(counts["test"]))
        self.console.print(table)
        counts = dataset.counts
        self._print(f"✅ {counts['total']} Records, train+val {counts['train_val']}, test {counts['test']}", "green")
        return EXIT_CODES["ok"]

    # ------------------------------------------------------------------
    # train
    # ------------------------------------------------------------------
    def cmd_train(self, args) -> int:
        data = {}
        if args.config:
            config = TrainConfig.load(args.config)
            data = config.to_dict()
        overrides = {"dataset": args.dataset, "output_dir": args.out, "epochs": args.epochs, "seed": args.seed}
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        if args.c6 is not None:
            data.setdefault("loss_weights", {})["c6"] = args.c6
        config = TrainConfig.from_dict(data)
        if not config.dataset:
            raise InvalidArgumentError("Kein Datensatz angegeben (--dataset oder 'dataset' in der Konfiguration)")

        dataset = load_dataset(config.dataset)
        prov = self._prov(args, {"seed": config.seed})
        self._print(f"🚀 Training auf {len(dataset.split('train'))} Instanzen, {config.epochs} Epochen", "bold green")
        result = train(dataset.records, config, prov=prov, show_progress=True)

        table = Table(title="🧮 Parameter")
        table.add_column("Modell", style="cyan")
        table.add_column("Modul", style="white")
        table.add_column("Parameter", style="magenta", justify="right")
        for name, model in (("teacher", result.teacher), ("student", result.student)):
            for group, count in parameter_groups(model):
                table.add_row(name, group, f"{count:,}")
            table.add_row(name, "[bold]gesamt[/bold]", f"{parameter_count(model):,}")
        self.console.print(table)

        if result.history:
            history = Table(title="📉 Loss-Verlauf")
            for column in ("Phase", "Epoche", "Train", "Val"):
                history.add_column(column)
            for entry in result.history:
                history.add_row(entry.phase, str(entry.epoch), f"{entry.train_loss:.6g}", f"{entry.val_loss:.6g}")
            self.console.print(history)
        self._print(f"✅ Student-Checkpoint: {result.student_path}", "green")
        return EXIT_CODES["ok"]

    # ------------------------------------------------------------------
    # predict
    # ------------------------------------------------------------------
    def _load_student(self, path: str):
        checkpoint = load_checkpoint(path)
        if checkpoint.variant != "student":
            raise InvalidArgumentError(f"{path} ist ein {checkpoint.variant}-Checkpoint; Vorhersagen nutzen nur den Student")
        model = checkpoint.build()
        model.eval()
        return model

    def cmd_predict(self, args) -> int:
        _check_dt_ell(args.dt, 1)
        model = self._load_student(args.checkpoint)
        instances = _collect_instances(args.input)
        out = self._out_dir(args, "predictions")
        prov = self._prov(args)
        timings = []
        for stem, instance in instances:
            start = time.perf_counter()
            prediction = student_forward(instance, model)
            elapsed = (time.perf_counter() - start) * 1000.0
            timings.append(elapsed)
            logger.info(f"⏱️ {stem}: {elapsed:.2f} ms")
            ParameterCurve(args.dt, prediction.values, "surrogate").save(os.path.join(out, f"{stem}.curve"), prov)
        self._print(f"✅ {len(instances)} Kurven vorhergesagt, im Mittel {np.mean(timings):.2f} ms pro Graph", "green")
        return EXIT_CODES["ok"]

    # ------------------------------------------------------------------
    # run-falqon / run-anneal / replay
    # ------------------------------------------------------------------
    def cmd_run_falqon(self, args) -> int:
        _check_dt_ell(args.dt, args.ell)
        instances = _collect_instances(args.input)
        out = self._out_dir(args, "falqon")
        prov = self._prov(args)

        def worker(instance: GraphInstance):
            return run_falqon(instance, args.dt, args.ell)

        results = run_batch(instances, worker, self._threads(args), description="FALQON", show_progress=True)
        for stem, (curve, trajectory) in results.items():
            curve.save(os.path.join(out, f"{stem}.curve"), prov)
            trajectory.save_csv(os.path.join(out, f"{stem}_trajectory.csv"), prov)
            self._print(f"✅ {stem}: beta_1 = {curve.betas[0]:.3g}, r_A(ell) = {trajectory.approx_ratio[-1]:.4f}", "green")
        return EXIT_CODES["ok"]

    def cmd_run_anneal(self, args) -> int:
        _check_dt_ell(args.dt, args.ell)
        instances = _collect_instances(args.input)
        out = self._out_dir(args, "anneal")
        prov = self._prov(args)
        schedule = linear_schedule(args.dt, args.ell)
        results = run_batch(instances, lambda inst: replay_curve(inst, schedule), self._threads(args),
                            description="Lineares Annealing", show_progress=True)
        for stem, trajectory in results.items():
            trajectory.save_csv(os.path.join(out, f"{stem}_anneal.csv"), prov)
        self._print(f"✅ {len(results)} Annealing-Trajektorien in {out}", "green")
        return EXIT_CODES["ok"]

    def cmd_replay(self, args) -> int:
        curve = ParameterCurve.load(args.curve)
        instances = _collect_instances(args.input)
        if len(instances) != 1:
            raise InvalidArgumentError("replay erwartet genau eine Instanzdatei")
        stem, instance = instances[0]
        out = self._out_dir(args, "replay")
        trajectory = replay_curve(instance, curve)
        path = os.path.join(out, f"{stem}_replay.csv")
        trajectory.save_csv(path, self._prov(args))
        self._print(f"✅ Replay ({curve.source}) -> {path}", "green")
        return EXIT_CODES["ok"]

    # ------------------------------------------------------------------
    # evaluate
    # ------------------------------------------------------------------
    def _candidate_curve(self, args, stem: str, instance: GraphInstance, reference: ParameterCurve, model):
        if args.mode == "self":
            return reference
        if args.mode == "files":
            return ParameterCurve.load(os.path.join(args.candidates, f"{stem}.curve"))
        if args.mode == "baseline":
            return unweighted_baseline(instance, args.dt, args.ell)
        prediction = student_forward(instance, model)
        return ParameterCurve(args.dt, prediction.values, "surrogate")

    def cmd_evaluate(self, args) -> int:
        _check_dt_ell(args.dt, args.ell)
        if args.mode == "files" and not args.candidates:
            raise InvalidArgumentError("--mode files braucht --candidates")
        model = None
        if args.mode == "surrogate":
            if not args.checkpoint:
                raise InvalidArgumentError("--mode surrogate braucht --checkpoint")
            model = self._load_student(args.checkpoint)
            if model.config.ell != args.ell:
                raise InvalidArgumentError(f"Modell sagt ell={model.config.ell} voraus, nicht {args.ell}")

        instances = _collect_instances(args.instances)
        out = self._out_dir(args, f"evaluate_{args.mode}")
        prov = self._prov(args)
        schedule = linear_schedule(args.dt, args.ell)

        def worker(item):
            stem, instance = item
            problem = build_problem_diagonal(instance)
            if args.references:
                reference = ParameterCurve.load(os.path.join(args.references, f"{stem}.curve"))
                reference_traj = replay_curve(instance, reference, problem)
            else:
                reference, reference_traj = run_falqon(instance, args.dt, args.ell, problem)
            candidate = self._candidate_curve(args, stem, instance, reference, model)
            candidate_traj = replay_curve(instance, candidate, problem)
            linear_traj = replay_curve(instance, schedule, problem)
            series = deviations(reference, reference_traj, candidate, candidate_traj)
            return instance.n, series, reference_traj, linear_traj, candidate_traj

        results = run_batch([(stem, (stem, inst)) for stem, inst in instances], worker, self._threads(args),
                            description=f"Evaluation ({args.mode})", show_progress=True)

        deviation_dir = os.path.join(out, "deviations")
        by_size = defaultdict(list)
        for stem, (n, series, reference_traj, linear_traj, candidate_traj) in results.items():
            rows = [[j + 1, series.beta[j], series.approx_ratio[j], series.success_prob[j]] for j in range(series.ell)]
            write_csv(os.path.join(deviation_dir, f"{stem}.csv"), DEVIATION_HEADER, rows, prov)
            by_size[n].append((series, reference_traj, linear_traj, candidate_traj))

        summary_rows = []
        for n in sorted(by_size):
            items = by_size[n]
            for metric, agg in aggregate_deviations([item[0] for item in items]).items():
                agg.save_csv(os.path.join(out, f"aggregate_{metric}_n{n}.csv"), prov)
            self._write_equal_layer(out, n, items, prov)
            summary_rows.extend(self._summary_rows(n, items))
        write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER, summary_rows, prov)
        self._display_summary(summary_rows)
        return EXIT_CODES["ok"]

    @staticmethod
    def _write_equal_layer(out: str, n: int, items, prov):
        columns = []
        for index in (1, 2, 3):
            columns.append(aggregate([item[index].approx_ratio for item in items]).mean)
            columns.append(aggregate([item[index].success_prob for item in items]).mean)
        rows = [[j] + [float(col[j]) for col in columns] for j in range(columns[0].size)]
        write_csv(os.path.join(out, f"equal_layer_n{n}.csv"), EQUAL_LAYER_HEADER, rows, prov)

    def _summary_rows(self, n: int, items) -> List[List]:
        deviation_means = {metric: float(np.mean([item[0].series(metric).mean() for item in items]))
                           for metric in DEVIATION_METRICS}
        rows = []
        for method, index in (("falqon", 1), ("linear", 2), ("candidate", 3)):
            final_r = aggregate([[item[index].approx_ratio[-1]] for item in items])
            final_phi = aggregate([[item[index].success_prob[-1]] for item in items])
            devs = [deviation_means[m] for m in DEVIATION_METRICS] if method == "candidate" else [float("nan")] * 3
            rows.append([method, n, len(items), float(final_r.mean[0]), float(final_r.std[0]),
                         float(final_phi.mean[0]), float(final_phi.std[0])] + devs)
        return rows

    def _display_summary(self, rows: Sequence[Sequence]):
        table = Table(title="📊 Vergleich bei gleicher Layerzahl")
        for column in ("Methode", "n", "Anzahl", "r_A (final)", "φ (final)", "mean |Δβ|"):
            table.add_column(column)
        for row in rows:
            table.add_row(row[0], str(row[1]), str(row[2]), f"{row[3]:.4f} ± {row[4]:.4f}",
                          f"{row[5]:.4f} ± {row[6]:.4f}", "-" if np.isnan(row[7]) else f"{row[7]:.3g}")
        self.console.print(table)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="P-Falqon.py", description=f"{TOOL_NAME} {TOOL_VERSION}")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-file", default=None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def add(name: str, handler: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("--out", default=None, help="Ausgabeverzeichnis")
        p.add_argument("--threads", type=int, default=None, help="Worker-Threads (1 = bitweise deterministisch)")
        return p

    p = add("gen-graphs", "cmd_gen_graphs", "Kubische Graphen erzeugen")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=("exhaustive", "sample"), default="exhaustive")
    p.add_argument("--count", type=int, default=None,
                   help="exhaustive: Gewichtsziehungen pro Topologie (0 = ungewichtet); sample: Anzahl Topologien")
    p.add_argument("--draws", type=int, default=None, help="Gewichtsziehungen pro gesampelter Topologie (nur sample)")
    p.add_argument("--seed", type=int, default=20240607)

    p = add("gen-dataset", "cmd_gen_dataset", "Trainingsdatensatz erzeugen")
    p.add_argument("--config", default=None)
    p.add_argument("--split-by-topology", action="store_true")

    p = add("train", "cmd_train", "Teacher und Student trainieren")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--c6", type=float, default=None)

    p = add("predict", "cmd_predict", "Kurven mit dem Student vorhersagen")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dt", type=float, default=0.01)

    p = add("run-falqon", "cmd_run_falqon", "FALQON exakt simulieren")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--ell", type=int, default=1001)

    p = add("run-anneal", "cmd_run_anneal", "Digitalisiertes lineares Annealing")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--ell", type=int, default=1001)

    p = add("replay", "cmd_replay", "Kurve auf einer Instanz abspielen")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--curve", required=True)

    p = add("evaluate", "cmd_evaluate", "Kandidatenkurven gegen FALQON vergleichen")
    p.add_argument("--mode", choices=EVALUATE_MODES, default="self")
    p.add_argument("--instances", required=True)
    p.add_argument("--references", default=None)
    p.add_argument("--candidates", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--ell", type=int, default=1001)
    return parser


def _error_line(kind: str, code: int, message: str) -> str:
    return f"error kind={kind} exit={code} message={json.dumps(message, ensure_ascii=False)}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Hauptfunktion; liefert den Exit-Code"""
    try:
        args = build_parser().parse_args(argv)
        settings = load_settings()
        setup_logging(args.log_level or settings["log_level"], args.log_file or settings["log_file"])
        app = FalqonApp(settings)
        return getattr(app, args.handler)(args)
    except KeyboardInterrupt:
        print("\n❌ Abgebrochen durch Benutzer", file=sys.stderr)
        return 130
    except FalqonError as e:
        print(_error_line(e.kind, e.exit_code, str(e)), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(_error_line("io", EXIT_CODES["io"], str(e)), file=sys.stderr)
        return EXIT_CODES["io"]
    except (ValueError, TypeError, KeyError) as e:
        print(_error_line("invalid-argument", EXIT_CODES["invalid-argument"], str(e)), file=sys.stderr)
        return EXIT_CODES["invalid-argument"]
    except (ArithmeticError, RuntimeError, MemoryError) as e:
        print(_error_line("numeric", EXIT_CODES["numeric"], str(e)), file=sys.stderr)
        return EXIT_CODES["numeric"]


if __name__ == "__main__":
    sys.exit(main())
