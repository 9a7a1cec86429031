"""Monte Carlo replication harness and the reference-label clustering workflow."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .clustering import ClusterPartition, adjusted_rand_index, hierarchical_partition
from .config import FitConfig
from .constants import (
    EXAMPLES,
    METHOD_CPCA_F,
    METHOD_CPCA_F_G,
    METHOD_CPCA_I,
    METHOD_CPCA_I_G,
    METHOD_PCA,
    METHOD_POET,
)
from .covariance import cpca_cov, frob_distance, pca_cov, poet_cov
from .engine import CpcaModel, fit, fit_initial, fit_pca, msre, recover
from .errors import ValidationError
from .logging_config import logger
from .matrix import DataMatrix, center_columns
from .pcr import cv_lambda, fit_group_lasso, fit_ols_pcr, mspe
from .simgen import SimulatedPanel, gen_example, gen_pcr_response, replication_streams

COLUMNS = ["rep", "method", "n_pcs", "msre", "mspe", "cov_ed", "ari_vs_truth"]
METHOD_ORDER = [METHOD_CPCA_I, METHOD_CPCA_F, METHOD_PCA, METHOD_CPCA_I_G, METHOD_CPCA_F_G, METHOD_POET]

NAN = float("nan")


@dataclass(frozen=True)
class Design:
    example: int
    pcr: bool

    @property
    def label(self) -> str:
        return f"pcr{self.example}" if self.pcr else str(self.example)


def parse_design(name) -> Design:
    """``1``..``4`` select a recovery design, ``pcr1``..``pcr3`` a regression/covariance design."""
    text = str(name).strip().lower()
    pcr = text.startswith("pcr")
    digits = text[3:] if pcr else text
    if not digits.isdigit() or int(digits) not in EXAMPLES or (pcr and int(digits) == 4):
        raise ValidationError(f"unknown example {name!r}; choose 1-4 or pcr1-pcr3")
    return Design(int(digits), pcr)


def _row(rep: int, method: str, **values) -> dict:
    row = {"rep": rep, "method": method, "n_pcs": NAN, "msre": NAN, "mspe": NAN, "cov_ed": NAN, "ari_vs_truth": NAN}
    row.update(values)
    return row


def _cpca_rows(rep, tag, model: CpcaModel, panel: SimulatedPanel, y, design: Design) -> list[dict]:
    test = model.center(panel.X_test).values
    values = {
        "n_pcs": model.total_components,
        "msre": msre(recover(model, test), test),
        "ari_vs_truth": adjusted_rand_index(model.partition, panel.truth.partition),
    }
    if not design.pcr:
        return [_row(rep, tag, **values)]

    n = panel.n
    G_tr, F_tr = model.training_scores()
    G_te, F_te = model.transform(test)
    values["cov_ed"] = frob_distance(cpca_cov(model), panel.truth.cov)
    try:
        ols = fit_ols_pcr(G_tr, F_tr, y[:n])
        values["mspe"] = mspe(ols.predict(G_te, F_te), y[n:])
    except ValidationError as e:
        logger.warning("Replication %d, %s: OLS skipped (%s)", rep, tag, e)
    rows = [_row(rep, tag, **values)]

    grouped = {METHOD_CPCA_I: METHOD_CPCA_I_G, METHOD_CPCA_F: METHOD_CPCA_F_G}[tag]
    try:
        lam = cv_lambda(G_tr, F_tr, y[:n])
        gl = fit_group_lasso(G_tr, F_tr, y[:n], lam)
        rows.append(_row(rep, grouped, n_pcs=model.total_components, mspe=mspe(gl.predict(G_te, F_te), y[n:])))
    except ValidationError as e:
        logger.warning("Replication %d, %s: group lasso skipped (%s)", rep, grouped, e)
        rows.append(_row(rep, grouped))
    return rows


def run_replication(design: Design, rep: int, rng, cfg: FitConfig) -> tuple[list[dict], bool]:
    """All methods on one generated panel; also reports whether the iterative fit converged."""
    panel = gen_example(design.example, rng)
    truth = panel.truth
    cfg = replace(cfg, common_effect=truth.r_c > 0)
    y = gen_pcr_response(truth, panel.G, panel.F, rng) if design.pcr else None

    initial = fit_initial(panel.X_train, cfg)
    final = fit(panel.X_train, cfg)
    rows = _cpca_rows(rep, METHOD_CPCA_I, initial, panel, y, design)
    rows += _cpca_rows(rep, METHOD_CPCA_F, final, panel, y, design)

    baseline = fit_pca(panel.X_train, cfg)
    test = baseline.center(panel.X_test).values
    pca_values = {"n_pcs": baseline.r_c, "msre": msre(recover(baseline, test, mode="pca"), test)}
    if design.pcr:
        n = panel.n
        Xc, _ = center_columns(panel.X_train)
        pca_values["cov_ed"] = frob_distance(pca_cov(Xc, baseline.r_c), truth.cov)
        ols = fit_ols_pcr(baseline.G, [], y[:n])
        pca_values["mspe"] = mspe(ols.predict(baseline.transform(test)[0], []), y[n:])
        rows.append(_row(rep, METHOD_PCA, **pca_values))
        rows.append(_row(rep, METHOD_POET, n_pcs=baseline.r_c,
                         cov_ed=frob_distance(poet_cov(Xc, baseline.r_c), truth.cov)))
    else:
        rows.append(_row(rep, METHOD_PCA, **pca_values))
    return rows, final.converged


@dataclass
class SimulationResult:
    design: Design
    rows: pd.DataFrame
    summary: pd.DataFrame
    non_converged: list[int] = field(default_factory=list)

    def table(self) -> pd.DataFrame:
        """Per-replication rows followed by the mean and se footer rows."""
        return pd.concat([self.rows, self.summary], ignore_index=True)[COLUMNS]


def summarize(rows: pd.DataFrame) -> pd.DataFrame:
    """Mean and across-replication standard deviation per method (reported as ``se``)."""
    metrics = [c for c in COLUMNS if c not in ("rep", "method")]
    present = [m for m in METHOD_ORDER if m in set(rows["method"])]
    grouped = rows.groupby("method")[metrics]
    mean = grouped.mean().reindex(present).reset_index().assign(rep="mean")
    spread = grouped.std(ddof=1).reindex(present).reset_index().assign(rep="se")
    return pd.concat([mean, spread], ignore_index=True)[COLUMNS]


def run_simulation(example, reps: int, seed: int = 0, cfg: FitConfig | None = None, jobs: int = 1) -> SimulationResult:
    """Replicate a design ``reps`` times on independent streams of one master seed."""
    design = parse_design(example)
    if reps < 1:
        raise ValidationError(f"reps must be >= 1, got {reps}")
    cfg = cfg or FitConfig()
    streams = replication_streams(seed, reps)
    logger.info("Simulating example %s: %d replications (seed %d, %d jobs)", design.label, reps, seed, jobs)

    def one(rep: int):
        return run_replication(design, rep, streams[rep - 1], cfg)

    reps_range = range(1, reps + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, reps_range))
    else:
        outcomes = [one(rep) for rep in reps_range]

    order = {m: i for i, m in enumerate(METHOD_ORDER)}
    flat = sorted((row for rep_rows, _ in outcomes for row in rep_rows), key=lambda r: (r["rep"], order[r["method"]]))
    rows = pd.DataFrame(flat, columns=COLUMNS)
    non_converged = [rep for rep, (_, ok) in zip(reps_range, outcomes) if not ok]
    if non_converged:
        logger.warning("%d of %d replications did not converge", len(non_converged), reps)
    return SimulationResult(design, rows, summarize(rows), non_converged)


# ----------------------------------------------------------------------
# Clustering workflow on a real panel
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClusteringStage:
    name: str
    partition: ClusterPartition
    ari: float | None


@dataclass(frozen=True, eq=False)
class ClusteringReport:
    stages: list[ClusteringStage]
    r_c: int
    converged: bool
    train_rows: int

    def to_dict(self) -> dict:
        return {
            "train_rows": self.train_rows,
            "r_c": self.r_c,
            "converged": self.converged,
            "stages": [
                {"name": s.name, "J": s.partition.J, "ari": s.ari, "labels": s.partition.labels.tolist()}
                for s in self.stages
            ],
        }


def cluster_workflow(X: DataMatrix, reference=None, train_fraction: float = 0.5,
                     cfg: FitConfig | None = None) -> ClusteringReport:
    """Hierarchical clustering of the raw panel, then the CPCA initial and final partitions.

    Only the leading ``train_fraction`` of rows is used. With ``reference``
    labels each stage is scored by its ARI against them.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValidationError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    train_rows = int(np.floor(X.n * train_fraction))
    if train_rows < 2:
        raise ValidationError(f"{train_rows} training rows is too few")
    train = X.rows(slice(0, train_rows))
    if reference is not None and len(reference) != X.p:
        raise ValidationError(f"{len(reference)} reference labels for {X.p} columns")

    def score(partition: ClusterPartition) -> float | None:
        return adjusted_rand_index(partition, np.asarray(reference)) if reference is not None else None

    Xc, _ = center_columns(train)
    raw = hierarchical_partition(Xc, allow_degenerate=True)
    initial = fit_initial(train, cfg)
    final = fit(train, cfg)
    stages = [
        ClusteringStage("hierarchical", raw, score(raw)),
        ClusteringStage("cpca_initial", initial.partition, score(initial.partition)),
        ClusteringStage("cpca_final", final.partition, score(final.partition)),
    ]
    for s in stages:
        logger.info("Stage %s: J=%d, ARI=%s", s.name, s.partition.J, "n/a" if s.ari is None else f"{s.ari:.3f}")
    return ClusteringReport(stages, final.r_c, final.converged, train_rows)
