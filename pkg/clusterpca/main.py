"""ClusterPCA command line. Wires ingestion, fitting, experiments and export."""

import argparse
import os
import sys

import numpy as np
import pandas as pd

from . import config, storage
from .config import FitConfig
from .constants import (
    APP_NAME,
    APP_VERSION,
    COV_CPCA,
    COV_METHODS,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_VALIDATION,
)
from .covariance import covariance_by_method, cpca_cov
from .engine import CpcaEngine
from .errors import ValidationError
from .experiments import cluster_workflow, run_simulation
from .logging_config import enable_console, logger
from .matrix import degenerate_columns
from .portfolio import rolling_backtest
from .simgen import gen_example

MIN_FIT_ROWS = 4
MIN_FIT_COLUMNS = 4


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tau", type=float, help="LOO-PCR singleton threshold (default 0.95)")
    common.add_argument("--eta", type=float, help="ARI stopping threshold (default 0.95)")
    common.add_argument("--max-iter", type=int, dest="max_iterations", help="iteration cap (default 20)")
    common.add_argument("--seed", type=int, help="master random seed (default 0)")
    common.add_argument("--jobs", type=int, help="worker threads (default 1)")
    common.add_argument("--config", help="settings JSON (default: <app dir>/config.json)")
    common.add_argument("--verbose", "-v", action="store_true", help="debug output on stderr")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="clusterpca", description=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="replicate a simulation design")
    p.add_argument("--example", required=True, help="1-4, or pcr1-pcr3 for regression and covariance")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--out", required=True, help="results CSV")

    p = sub.add_parser("generate", parents=[common], help="export one simulated panel as CSV")
    p.add_argument("--example", type=int, required=True, choices=[1, 2, 3, 4])
    p.add_argument("--out", required=True, help="training panel CSV")
    p.add_argument("--test-out", help="test panel CSV")
    p.add_argument("--labels-out", help="true cluster labels CSV (column_id,label)")

    p = sub.add_parser("fit", parents=[common], help="fit CPCA to a panel")
    p.add_argument("input", help="panel CSV")
    p.add_argument("--out", required=True, help="model JSON")

    p = sub.add_parser("cov", parents=[common], help="export a covariance estimate")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("input", nargs="?", help="panel CSV")
    source.add_argument("--model", help="saved model JSON (cpca only)")
    p.add_argument("--method", choices=COV_METHODS, default=COV_CPCA)
    p.add_argument("--out", required=True, help="covariance CSV")

    p = sub.add_parser("mvp", parents=[common], help="rolling minimum-variance backtest")
    p.add_argument("input", help="returns CSV, first column ISO date")
    p.add_argument("--window", type=int)
    p.add_argument("--method", choices=COV_METHODS, default=COV_CPCA)
    p.add_argument("--refit-every", type=int)
    p.add_argument("--risk-free", type=float)
    p.add_argument("--cold-start", action="store_true", help="fit every window from scratch")
    p.add_argument("--out", required=True, help="portfolio returns CSV")
    p.add_argument("--metrics", help="metrics JSON (default: next to --out)")

    p = sub.add_parser("cluster", parents=[common], help="raw / initial / final clustering of a panel")
    p.add_argument("input", help="panel CSV")
    p.add_argument("--labels", help="reference labels CSV (column_id,label)")
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--out", required=True, help="report JSON")
    return parser


class ClusterPcaApp:
    """Parses arguments, resolves settings and runs one command."""

    def __init__(self, argv: list[str] | None = None):
        self.argv = list(sys.argv[1:] if argv is None else argv)
        self.args = build_parser().parse_args(self.argv)
        self.cmdline = " ".join(["clusterpca", *self.argv])
        self.settings = {}
        self.cfg = FitConfig()

    def run(self) -> int:
        enable_console(self.args.verbose)
        logger.info("Starting %s", self.cmdline)
        try:
            self._load_settings()
            code = getattr(self, f"_cmd_{self.args.command}")()
        except ValidationError as e:
            logger.error("%s", e)
            return EXIT_VALIDATION
        except OSError as e:
            logger.error("I/O failure: %s", e)
            return EXIT_VALIDATION
        except np.linalg.LinAlgError as e:
            logger.error("Linear algebra failure in %s: %s", self.args.command, e)
            return EXIT_VALIDATION
        logger.info("Finished %s (exit %d)", self.args.command, code)
        return code

    # ------------------------------------------------------------------
    # Settings
    # ------------------------------------------------------------------

    def _load_settings(self):
        """Flag > config file > defaults."""
        self.settings = config.load(self.args.config)
        self.cfg = FitConfig.from_settings(
            self.settings,
            tau=self.args.tau,
            eta=self.args.eta,
            max_iterations=self.args.max_iterations,
            seed=self.args.seed,
        )

    def _setting(self, name: str):
        value = getattr(self.args, name, None)
        return self.settings[name] if value is None else value

    @property
    def seed(self) -> int:
        return self.cfg.seed

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def _cmd_simulate(self) -> int:
        result = run_simulation(self.args.example, self.args.reps, self.seed, self.cfg, int(self._setting("jobs")))
        storage.write_table_csv(self.args.out, result.table(), storage.metadata_line(self.cmdline, self.seed))
        print(result.summary.to_string(index=False))
        if result.non_converged:
            print(f"{len(result.non_converged)} replication(s) did not converge: {result.non_converged}")
        return EXIT_OK

    def _cmd_generate(self) -> int:
        panel = gen_example(self.args.example, self.seed)
        header = storage.metadata_line(self.cmdline, self.seed)
        storage.write_panel_csv(self.args.out, panel.X_train, header=header)
        if self.args.test_out:
            storage.write_panel_csv(self.args.test_out, panel.X_test, header=header)
        if self.args.labels_out:
            frame = pd.DataFrame({"column_id": panel.X_train.column_ids, "label": panel.truth.partition.labels})
            storage.write_table_csv(self.args.labels_out, frame, header)
        print(f"Example {self.args.example}: {panel.X_train.n}x{panel.X_train.p} panel, J={panel.truth.J}")
        return EXIT_OK

    def _read_fit_panel(self, path: str):
        panel = storage.read_panel_csv(path)
        if panel.data.n < MIN_FIT_ROWS or panel.data.p < MIN_FIT_COLUMNS:
            raise ValidationError(
                f"{path}: need at least {MIN_FIT_ROWS} rows and {MIN_FIT_COLUMNS} columns, "
                f"got {panel.data.n}x{panel.data.p}"
            )
        flat = degenerate_columns(panel.data.values)
        if flat.any():
            names = [panel.data.column_ids[i] for i in flat.nonzero()[0]]
            raise ValidationError(f"{path}: zero-variance column(s) cannot be clustered: {', '.join(names)}")
        return panel

    def _cmd_fit(self) -> int:
        panel = self._read_fit_panel(self.args.input)
        engine = CpcaEngine(self.cfg)
        engine.set_callbacks(on_iteration=self._on_iteration)
        model = engine.fit(panel.data)
        storage.save_model(self.args.out, model, self.cmdline, self.seed)
        final_ari = model.trace.ari[-1] if model.trace.ari else float("nan")
        print(f"J={model.partition.J}  r_c={model.r_c}  r_j={model.cluster_ranks}")
        print(f"iterations={model.iterations}  final ARI={final_ari:.4f}  converged={model.converged}")
        return EXIT_OK if model.converged else EXIT_NOT_CONVERGED

    def _cmd_cov(self) -> int:
        header = storage.metadata_line(self.cmdline, self.seed)
        converged = True
        if self.args.model:
            if self.args.method != COV_CPCA:
                raise ValidationError("--model only supports --method cpca")
            est = cpca_cov(storage.load_model(self.args.model))
        else:
            data = self._read_fit_panel(self.args.input).data
            model = CpcaEngine(self.cfg).fit(data) if self.args.method == COV_CPCA else None
            converged = model is None or model.converged
            est = covariance_by_method(data, self.args.method, self.cfg, model=model)
        storage.write_covariance_csv(self.args.out, est, header)
        print(f"{est.method} covariance {est.sigma.shape[0]}x{est.sigma.shape[1]} written to {self.args.out}")
        return EXIT_OK if converged else EXIT_NOT_CONVERGED

    def _cmd_mvp(self) -> int:
        panel = storage.read_panel_csv(self.args.input)
        result = rolling_backtest(
            panel.data,
            window=int(self._setting("window")),
            method=self.args.method,
            cfg=self.cfg,
            refit_every=int(self._setting("refit_every")),
            warm_start=not self.args.cold_start,
            risk_free=float(self._setting("risk_free")),
            jobs=int(self._setting("jobs")),
            dates=panel.dates,
        )
        metrics_path = self.args.metrics or os.path.splitext(self.args.out)[0] + ".json"
        storage.write_backtest(self.args.out, metrics_path, result, self.cmdline, self.seed)
        m = result.metrics
        print(f"{result.method} ({result.mode}): {len(result.returns)} days  std={m.std:.6f}  "
              f"IR={m.ir:.4f}  SR={m.sr:.4f}  failures={len(result.failures)}")
        return EXIT_OK

    def _cmd_cluster(self) -> int:
        panel = self._read_fit_panel(self.args.input)
        reference = storage.read_labels_csv(self.args.labels, panel.data.column_ids) if self.args.labels else None
        report = cluster_workflow(panel.data, reference, self.args.train_fraction, self.cfg)
        storage.write_json(self.args.out, report.to_dict(), self.cmdline, self.seed)
        for s in report.stages:
            ari = "n/a" if s.ari is None else f"{s.ari:.3f}"
            print(f"{s.name:<14} J={s.partition.J:<4} ARI={ari}")
        return EXIT_OK if report.converged else EXIT_NOT_CONVERGED

    # ------------------------------------------------------------------
    # Callbacks
    # ------------------------------------------------------------------

    def _on_iteration(self, s: int, partition, ari: float):
        print(f"  iteration {s}: J={partition.J} ARI={ari:.4f}")


def run(argv: list[str] | None = None) -> int:
    return ClusterPcaApp(argv).run()


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
