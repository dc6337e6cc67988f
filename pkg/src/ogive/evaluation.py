"""Online next-response evaluation: predict, then reveal, one event at a time.

For every response in a student's stream the engine produces a probability
from strictly prior history of that student, then scores it.  Latent-trait
variants re-solve the MAP proficiency at each step (warm-started, solved in
lockstep across students); the SPC baseline predicts the student's majority
outcome so far.  All per-student computations are elementwise per row, so
predictions for one student never depend on which other students are present.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np
from scipy.stats import rankdata

from .calibration import ItemBank
from .concept_graph import ConceptGraph, StructuredPrior, build_prior
from .dataio import Dataset
from .inference import DEFAULT_SOLVER, SolverConfig, batched_scalar_map, batched_vector_map
from .irt_core import PROB_FLOOR, effective_discriminations, probit

REPORT_FORMAT_VERSION = "1"

MODEL_KINDS = ("spc", "static_2po", "temporal_2po", "factorial_mvn",
               "correlated_mvn", "tskirt")

_DEFAULT_HYPERS = {
    "spc": {},
    "static_2po": {"nu2": 0.0, "lam": 1.0},
    "temporal_2po": {"nu2": 10.0, "lam": 1.0},
    "factorial_mvn": {"nu2": 0.0, "lam": 1.0, "gamma": 0.0},
    "correlated_mvn": {"nu2": 0.0, "lam": 1.0, "gamma": 0.5},
    "tskirt": {"nu2": 0.1, "lam": 1.0, "gamma": 0.5},
}


@dataclass(frozen=True)
class ModelVariant:
    """One row of the model menu: a kind plus its hyperparameters."""

    kind: str
    nu2: float = 0.0
    lam: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(
                f"unknown model kind {self.kind!r}; choose from {', '.join(MODEL_KINDS)}"
            )
        if self.nu2 < 0.0:
            raise ValueError("nu2 must be >= 0")
        if self.lam <= 0.0:
            raise ValueError("lam must be > 0")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")

    @classmethod
    def from_name(cls, kind: str,
                  nu2: Optional[float] = None,
                  lam: Optional[float] = None,
                  gamma: Optional[float] = None) -> "ModelVariant":
        """Variant with its standard hyperparameters, selectively overridden.

        Overrides apply only where the kind has that knob; spc takes none.
        """
        if kind not in _DEFAULT_HYPERS:
            raise ValueError(
                f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}"
            )
        hypers = dict(_DEFAULT_HYPERS[kind])
        for name, value in (("nu2", nu2), ("lam", lam), ("gamma", gamma)):
            if name in hypers and value is not None:
                hypers[name] = float(value)
        return cls(kind, **hypers) if hypers else cls(kind)

    @property
    def is_spc(self) -> bool:
        return self.kind == "spc"

    @property
    def is_scalar(self) -> bool:
        return self.kind in ("static_2po", "temporal_2po")

    @property
    def is_vector(self) -> bool:
        return self.kind in ("factorial_mvn", "correlated_mvn", "tskirt")

    def hyperparameters(self) -> dict:
        keys = _DEFAULT_HYPERS[self.kind]
        return {k: getattr(self, k) for k in keys}


@dataclass(frozen=True)
class BucketMetrics:
    low: float
    high: float
    n_students: int
    n_predictions: int
    accuracy: Optional[float]
    auc: Optional[float]
    mean_log_likelihood: Optional[float]

    def to_dict(self) -> dict:
        return {
            "low": self.low, "high": self.high,
            "n_students": self.n_students, "n_predictions": self.n_predictions,
            "accuracy": self.accuracy, "auc": self.auc,
            "mean_log_likelihood": self.mean_log_likelihood,
        }


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    model: str
    hyperparameters: dict
    accuracy: float
    accuracy_sem: float
    auc: Optional[float]
    auc_note: Optional[str]
    mean_log_likelihood: float
    n_predictions: int
    n_skipped_events: int
    n_threshold_ties: int
    n_unconverged: int
    buckets: list
    # raw per-prediction arrays, prediction order; not serialized
    probabilities: np.ndarray = field(repr=False, default=None)
    outcomes: np.ndarray = field(repr=False, default=None)
    student_index: np.ndarray = field(repr=False, default=None)
    students: tuple = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "hyperparameters": dict(self.hyperparameters),
            "metrics": {
                "accuracy": self.accuracy,
                "accuracy_sem": self.accuracy_sem,
                "auc": self.auc,
                "auc_note": self.auc_note,
                "mean_log_likelihood": self.mean_log_likelihood,
                "n_predictions": self.n_predictions,
                "n_skipped_events": self.n_skipped_events,
                "n_threshold_ties": self.n_threshold_ties,
                "n_unconverged_solves": self.n_unconverged,
            },
            "buckets": [b.to_dict() for b in self.buckets],
        }


def _auc_from_arrays(scores: np.ndarray, outcomes: np.ndarray) -> Optional[float]:
    pos = outcomes == 1
    n_pos = int(pos.sum())
    n_neg = len(outcomes) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average rank on ties: counts ties as half
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def compute_auc(scored: Iterable[tuple[float, int]]) -> Optional[float]:
    """Probability a correct response outscores an incorrect one, ties half.

    Returns None when the outcomes are single-class (flagged by the caller).
    """
    pairs = list(scored)
    if not pairs:
        return None
    scores = np.array([s for s, _ in pairs], dtype=float)
    outcomes = np.array([o for _, o in pairs])
    return _auc_from_arrays(scores, outcomes)


def _clamped_log_likelihood(p: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return np.where(outcomes == 1, np.log(pc), np.log1p(-pc))


def bucket_by_student_percent_correct(
    probabilities: np.ndarray,
    outcomes: np.ndarray,
    student_index: np.ndarray,
    n_bins: int,
    with_auc: bool = True,
) -> list[BucketMetrics]:
    """Per-bucket metrics after assigning each student to an equal-width
    percent-correct bin (last bin closed on the right).

    Every bin is emitted, empty ones with None metrics, so the plot table has
    a fixed number of rows.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    buckets: list[BucketMetrics] = []
    if len(probabilities) == 0:
        return [
            BucketMetrics(i / n_bins, (i + 1) / n_bins, 0, 0, None, None, None)
            for i in range(n_bins)
        ]
    n_students = int(student_index.max()) + 1
    per_student_n = np.bincount(student_index, minlength=n_students)
    per_student_k = np.bincount(student_index, weights=outcomes, minlength=n_students)
    with np.errstate(invalid="ignore"):
        pc = np.where(per_student_n > 0, per_student_k / np.maximum(per_student_n, 1), 0.0)
    # the 1e-9 nudge keeps exact bin boundaries (pc = k/n) in the right bin
    student_bin = np.minimum((pc * n_bins + 1e-9).astype(int), n_bins - 1)
    pred_bin = student_bin[student_index]
    ll = _clamped_log_likelihood(probabilities, outcomes)
    predicted = probabilities >= 0.5
    for i in range(n_bins):
        sel = pred_bin == i
        n_pred = int(sel.sum())
        n_stud = int(((student_bin == i) & (per_student_n > 0)).sum())
        if n_pred == 0:
            buckets.append(
                BucketMetrics(i / n_bins, (i + 1) / n_bins, n_stud, 0, None, None, None)
            )
            continue
        acc = float((predicted[sel] == (outcomes[sel] == 1)).mean())
        auc = _auc_from_arrays(probabilities[sel], outcomes[sel]) if with_auc else None
        buckets.append(
            BucketMetrics(
                i / n_bins, (i + 1) / n_bins, n_stud, n_pred,
                acc, auc, float(ll[sel].mean()),
            )
        )
    return buckets


def _resolve_prior(model: ModelVariant, prior_graph, bank: ItemBank) -> StructuredPrior:
    if isinstance(prior_graph, StructuredPrior):
        if prior_graph.lam != model.lam or prior_graph.gamma != model.gamma:
            raise ValueError(
                f"prior has (lam={prior_graph.lam}, gamma={prior_graph.gamma}) but the "
                f"model wants (lam={model.lam}, gamma={model.gamma}); pass the graph "
                "instead to build a matching prior"
            )
        return prior_graph
    if isinstance(prior_graph, ConceptGraph):
        return build_prior(prior_graph, model.lam, model.gamma)
    if prior_graph is None:
        if model.gamma != 0.0:
            raise ValueError(
                f"model {model.kind!r} couples concepts (gamma={model.gamma}) "
                "and needs a concept graph"
            )
        return build_prior(ConceptGraph(bank.concepts()), model.lam, 0.0)
    raise TypeError(f"prior_graph must be StructuredPrior, ConceptGraph or None, "
                    f"got {type(prior_graph).__name__}")


def run_online_evaluation(
    data: Dataset,
    bank: ItemBank,
    model: ModelVariant,
    prior_graph: Union[StructuredPrior, ConceptGraph, None] = None,
    solver: SolverConfig = DEFAULT_SOLVER,
    n_buckets: int = 10,
    clock: str = "step",
    seconds_per_unit: float = 1.0,
) -> EvaluationReport:
    """Score every response of every student from strictly prior history.

    Events whose item is missing from the bank are dropped from the stream
    (they are neither predicted nor conditioned on) and tallied as skipped.
    Under the step clock the predicted event sits one step after the most
    recent history event; under the wall clock elapsed time comes from
    timestamps divided by seconds_per_unit.
    """
    if clock not in ("step", "wall"):
        raise ValueError(f"clock must be 'step' or 'wall', got {clock!r}")
    item_index: dict[str, int] = {}
    ids, alphas, betas, concepts = bank.arrays()
    for j, item_id in enumerate(ids):
        item_index[item_id] = j

    prior = None
    concept_to_idx: dict[str, int] = {}
    if model.is_vector:
        prior = _resolve_prior(model, prior_graph, bank)
        concept_to_idx = prior.graph.index
        for item_id, cid in zip(ids, concepts):
            if cid not in concept_to_idx:
                raise ValueError(
                    f"item {item_id!r} is on concept {cid!r}, "
                    "which is not a node of the concept graph"
                )

    # per-student event arrays, bank-unknown events dropped from the stream
    students: list[str] = []
    seq_alpha, seq_beta, seq_correct, seq_cidx, seq_time = [], [], [], [], []
    n_skipped = 0
    for sid, recs in data.students.items():
        last_ts = None
        rows = []
        for rec in recs:
            if last_ts is not None and rec.timestamp < last_ts:
                raise ValueError(f"student {sid!r}: events out of time order")
            last_ts = rec.timestamp
            j = item_index.get(rec.item_id)
            if j is None:
                n_skipped += 1
                continue
            rows.append((j, rec.correct, rec.timestamp))
        if not rows:
            continue
        students.append(sid)
        j_arr = np.array([r[0] for r in rows])
        seq_alpha.append(alphas[j_arr])
        seq_beta.append(betas[j_arr])
        seq_correct.append(np.array([r[1] for r in rows], dtype=float))
        if model.is_vector:
            seq_cidx.append(np.array([concept_to_idx[concepts[j]] for j in j_arr]))
        if clock == "wall":
            seq_time.append(np.array([r[2] for r in rows], dtype=float) / seconds_per_unit)
        else:
            seq_time.append(np.arange(1, len(rows) + 1, dtype=float))

    n_students = len(students)
    if n_students == 0:
        raise ValueError("no evaluable events: every event was skipped or the data is empty")
    lengths = np.array([len(a) for a in seq_alpha])
    width = int(lengths.max())

    def pad(seqs, dtype=float, fill=0.0):
        out = np.full((n_students, width), fill, dtype=dtype)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = s
        return out

    alpha_pad = pad(seq_alpha)
    beta_pad = pad(seq_beta)
    correct_pad = pad(seq_correct)
    time_pad = pad(seq_time)
    mask = np.arange(width)[None, :] < lengths[:, None]
    cidx_pad = pad(seq_cidx, dtype=np.intp, fill=0) if model.is_vector else None

    probs = np.zeros((n_students, width))
    n_unconverged = 0

    if model.is_spc:
        cum = np.cumsum(correct_pad, axis=1)
        prior_correct = cum - correct_pad
        denom = np.arange(width, dtype=float)[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            probs = np.where(denom > 0, prior_correct / np.maximum(denom, 1.0), 0.5)
    else:
        nu2 = model.nu2
        if model.is_scalar:
            theta = np.zeros(n_students)
        else:
            theta = np.zeros((n_students, prior.graph.n_concepts))
        for t in range(1, width + 1):
            idx = np.flatnonzero(lengths >= t)
            col = t - 1
            if t >= 2:
                hist = slice(0, col)
                a = alpha_pad[idx, hist]
                if clock == "step":
                    elapsed = float(t) - time_pad[idx, hist]
                else:
                    elapsed = time_pad[idx, col][:, None] - time_pad[idx, hist]
                a_eff = effective_discriminations(a, elapsed, nu2)
                b = beta_pad[idx, hist]
                r = correct_pad[idx, hist]
                full = np.ones_like(r, dtype=bool)
                if model.is_scalar:
                    th, conv, _ = batched_scalar_map(
                        theta[idx], a_eff, b, r, full, model.lam, 0.0,
                        solver.gradient_tolerance, solver.max_iterations,
                    )
                    theta[idx] = th
                else:
                    th, conv, _ = batched_vector_map(
                        theta[idx], a_eff, b, r, cidx_pad[idx, hist], full,
                        prior.precision,
                        solver.gradient_tolerance, solver.max_iterations,
                    )
                    theta[idx] = th
                n_unconverged += int((~conv).sum())
            if model.is_scalar:
                th_ev = theta[idx]
            else:
                th_ev = theta[idx, cidx_pad[idx, col]]
            z = alpha_pad[idx, col] * (th_ev - beta_pad[idx, col])
            probs[idx, col] = probit(z)

    p_all = probs[mask]
    y_all = correct_pad[mask].astype(int)
    student_index = np.repeat(np.arange(n_students), lengths)

    predicted = p_all >= 0.5
    accuracy = float((predicted == (y_all == 1)).mean())
    n = len(p_all)
    sem = float(np.sqrt(accuracy * (1.0 - accuracy) / n))
    ll = _clamped_log_likelihood(p_all, y_all)
    if model.is_spc:
        auc, auc_note = None, "baseline emits no ranking score"
    else:
        auc = _auc_from_arrays(p_all, y_all)
        auc_note = "single-class outcomes" if auc is None else None
    buckets = bucket_by_student_percent_correct(
        p_all, y_all, student_index, n_buckets, with_auc=not model.is_spc
    )
    return EvaluationReport(
        model=model.kind,
        hyperparameters=model.hyperparameters(),
        accuracy=accuracy,
        accuracy_sem=sem,
        auc=auc,
        auc_note=auc_note,
        mean_log_likelihood=float(ll.mean()),
        n_predictions=n,
        n_skipped_events=n_skipped,
        n_threshold_ties=int((p_all == 0.5).sum()),
        n_unconverged=n_unconverged,
        buckets=buckets,
        probabilities=p_all,
        outcomes=y_all,
        student_index=student_index,
        students=tuple(students),
    )


def write_report_json(report: EvaluationReport, path, run_config: Optional[dict] = None) -> None:
    payload = {"format_version": REPORT_FORMAT_VERSION}
    payload.update(report.to_dict())
    payload["run_config"] = run_config
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_bucket_tsv(reports: list[EvaluationReport], path,
                     run_config: Optional[dict] = None) -> None:
    """Long-format plot table: one row per (model, bucket)."""

    def fmt(x):
        return "n/a" if x is None else format(x, ".10g")

    with open(path, "w", encoding="utf-8") as fh:
        if run_config is not None:
            fh.write("# run_config: " + json.dumps(run_config, sort_keys=True) + "\n")
        fh.write("# format_version: " + REPORT_FORMAT_VERSION + "\n")
        fh.write("model\tbucket_low\tbucket_high\tn_students\tn_predictions"
                 "\taccuracy\tauc\tmean_log_likelihood\n")
        for rep in reports:
            for b in rep.buckets:
                fh.write("\t".join([
                    rep.model, fmt(b.low), fmt(b.high), str(b.n_students),
                    str(b.n_predictions), fmt(b.accuracy), fmt(b.auc),
                    fmt(b.mean_log_likelihood),
                ]) + "\n")


def summary_table(reports: list[EvaluationReport]) -> str:
    """Fixed-width comparison table, one model per row."""
    header = (f"{'model':<16} {'accuracy':>10} {'sem':>9} {'auc':>8} "
              f"{'mean_ll':>9} {'n':>9} {'skipped':>8} {'unconv':>7}")
    lines = [header, "-" * len(header)]
    for r in reports:
        auc = "n/a" if r.auc is None else f"{r.auc:.4f}"
        lines.append(
            f"{r.model:<16} {r.accuracy:>10.4f} {r.accuracy_sem:>9.4f} {auc:>8} "
            f"{r.mean_log_likelihood:>9.4f} {r.n_predictions:>9d} "
            f"{r.n_skipped_events:>8d} {r.n_unconverged:>7d}"
        )
    return "\n".join(lines)
