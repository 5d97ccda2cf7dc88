"""Trial data ingestion, per-trial metrics and aggregate reports.

The canonical on-disk format is a long CSV with one row per subject per
round::

    dataset_id,condition,group_id,task_id,subject_id,round,estimate,truth[,messages_sent]

Round 0 is each subject's independent estimate; a subject's highest round is
its final estimate.  Simulated ensembles are written in the same format so
simulated and observed trials go through identical analysis code.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics, heuristic, statkit
from .errors import (
    AllZero,
    InvariantError,
    ParseError,
    Separation,
    SchemaError,
    Singular,
    TooFew,
    ValidationError,
    ZeroVariance,
)
from .heuristic import Label
from .simlab import empirical_stubbornness

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("dataset_id", "condition", "group_id", "task_id", "subject_id", "round", "estimate", "truth")
OPTIONAL_COLUMNS = ("messages_sent",)
CONDITIONS = ("delphi", "discussion")
MIN_FIT_TRIALS = 10


# -- dataset ----------------------------------------------------------------

def _subject_key(ids):
    """Sort key for subject ids: numeric when every id is an integer."""
    try:
        [int(s) for s in ids]
    except ValueError:
        return str
    return lambda s: (int(s), s)


@dataclass
class TrialData:
    """All rows of one group answering one task."""

    dataset_id: str
    group_id: str
    task_id: str
    condition: str
    truth: float
    # subject -> {round: estimate}
    estimates: dict = field(default_factory=dict)
    messages: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        return (self.dataset_id, self.group_id, self.task_id)

    @property
    def subjects(self) -> list:
        ids = list(self.estimates)
        return sorted(ids, key=_subject_key(ids))

    @property
    def final_round(self) -> int:
        return max(max(r) for r in self.estimates.values())


@dataclass
class TrialDataset:
    trials: dict  # key -> TrialData, in sorted key order

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials.values())


def _parse_float(text, name, line):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{name} {text!r} is not a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"{name} must be finite, got {text!r}", line)
    return value


def _parse_count(text, name, line):
    try:
        value = int(text)
    except ValueError:
        f = _parse_float(text, name, line)
        if f != int(f):
            raise ParseError(f"{name} {text!r} is not an integer", line) from None
        value = int(f)
    if value < 0:
        raise ParseError(f"{name} must be non-negative, got {text!r}", line)
    return value


def load_csv(source) -> TrialDataset:
    """Read and validate a long-format trial CSV from a path or text stream."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_csv(fh)
    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    has_messages = "messages_sent" in header

    trials = {}
    task_truth = {}
    for row in reader:
        line = reader.line_num
        if None in row or any(row.get(c) is None for c in REQUIRED_COLUMNS):
            raise ParseError("wrong number of fields", line)
        cond = row["condition"].strip()
        if cond not in CONDITIONS:
            raise ParseError(f"condition must be one of {CONDITIONS}, got {cond!r}", line)
        rnd = _parse_count(row["round"].strip(), "round", line)
        est = _parse_float(row["estimate"].strip(), "estimate", line)
        truth = _parse_float(row["truth"].strip(), "truth", line)
        ds, grp, task, subj = (row[c].strip() for c in ("dataset_id", "group_id", "task_id", "subject_id"))
        if not all((ds, grp, task, subj)):
            raise ParseError("dataset_id, group_id, task_id and subject_id must be non-empty", line)

        prior = task_truth.setdefault((ds, task), truth)
        if prior != truth:
            raise InvariantError(f"truth varies within task {task!r} of dataset {ds!r} ({prior!r} vs {truth!r}, line {line})")
        key = (ds, grp, task)
        trial = trials.get(key)
        if trial is None:
            trial = trials[key] = TrialData(ds, grp, task, cond, truth)
        elif trial.condition != cond:
            raise InvariantError(f"condition varies within group {grp!r} task {task!r} (line {line})")
        rounds = trial.estimates.setdefault(subj, {})
        if rnd in rounds:
            raise InvariantError(f"duplicate row for subject {subj!r} round {rnd} in group {grp!r} task {task!r} (line {line})")
        rounds[rnd] = est

        text = (row.get("messages_sent") or "").strip() if has_messages else ""
        if text:
            count = _parse_count(text, "messages_sent", line)
            seen = trial.messages.setdefault(subj, count)
            if seen != count:
                raise InvariantError(f"messages_sent for subject {subj!r} differs between rows (line {line})")

    if not trials:
        raise InvariantError("no trials in input")
    for trial in trials.values():
        for subj, rounds in trial.estimates.items():
            if 0 not in rounds:
                raise InvariantError(
                    f"subject {subj!r} has no round-0 estimate in group {trial.group_id!r} task {trial.task_id!r}"
                )
    return TrialDataset({k: trials[k] for k in sorted(trials)})


# -- per-trial metrics --------------------------------------------------------

@dataclass(frozen=True)
class TrialMetrics:
    dataset_id: str
    group_id: str
    task_id: str
    condition: str
    n_subjects: int
    truth: float
    phi: float
    phi_degenerate: bool
    label: Label
    outcome: dynamics.Outcome
    pre_mean: float
    post_mean: float
    gini_messages: float | None = None
    top_talker: str | None = None
    top_talker_toward: bool | None = None
    stubbornness: tuple | None = None  # per subject, None where undefined
    dropouts: int = 0

    @property
    def improved(self) -> bool:
        return self.outcome is dynamics.Outcome.IMPROVED

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "group_id": self.group_id,
            "task_id": self.task_id,
            "condition": self.condition,
            "n_subjects": self.n_subjects,
            "truth": self.truth,
            "phi": self.phi,
            "phi_degenerate": self.phi_degenerate,
            "label": self.label.value,
            "outcome": self.outcome.value,
            "pre_mean": self.pre_mean,
            "post_mean": self.post_mean,
            "gini_messages": self.gini_messages,
            "top_talker": self.top_talker,
            "top_talker_toward": self.top_talker_toward,
            "stubbornness": list(self.stubbornness) if self.stubbornness is not None else None,
            "dropouts": self.dropouts,
        }


def _top_talker(subjects, messages):
    # max count; ties go to the first subject in sorted id order
    best = int(np.argmax(np.asarray(messages)))
    return subjects[best]


def compute_metrics(
    ids: tuple,
    condition: str,
    truth: float,
    subjects,
    pre,
    post,
    messages=None,
    first_revision=None,
    dropouts: int = 0,
) -> TrialMetrics:
    """Metrics of one trial from aligned per-subject vectors.

    ``messages`` are message counts (discussion); ``first_revision`` holds
    each subject's round-1 estimate (delphi) or ``None`` where absent.
    """
    pre = np.asarray(pre, dtype=np.float64)
    post = np.asarray(post, dtype=np.float64)
    summary = heuristic.phi(pre, truth)
    outcome = dynamics.improvement(pre, post, truth)
    mu = float(pre.mean())

    gini_messages = top = toward = None
    if messages is not None:
        try:
            gini_messages = statkit.gini(messages)
        except AllZero:
            gini_messages = None
        else:
            top = _top_talker(subjects, messages)
            x_top = pre[list(subjects).index(top)]
            side = np.sign(truth - mu)
            toward = bool(side != 0 and np.sign(x_top - mu) == side)

    stubborn = None
    if condition == "delphi" and first_revision is not None:
        n = pre.shape[0]
        total = float(pre.sum())
        out = []
        for i, nxt in enumerate(first_revision):
            if nxt is None or n < 2:
                out.append(None)
                continue
            out.append(empirical_stubbornness(float(pre[i]), float(nxt), (total - pre[i]) / (n - 1)))
        stubborn = tuple(out)

    return TrialMetrics(
        dataset_id=ids[0],
        group_id=ids[1],
        task_id=ids[2],
        condition=condition,
        n_subjects=int(pre.shape[0]),
        truth=float(truth),
        phi=summary.phi,
        phi_degenerate=summary.degenerate,
        label=summary.label,
        outcome=outcome,
        pre_mean=mu,
        post_mean=float(post.mean()),
        gini_messages=gini_messages,
        top_talker=top,
        top_talker_toward=toward,
        stubbornness=stubborn,
        dropouts=dropouts,
    )


def trial_metrics(trial: TrialData) -> TrialMetrics:
    subjects = trial.subjects
    last = trial.final_round
    pre, post, first, dropouts = [], [], [], 0
    for s in subjects:
        rounds = trial.estimates[s]
        pre.append(rounds[0])
        final = max(rounds)
        if final != last:
            dropouts += 1
        post.append(rounds[final])
        first.append(rounds.get(1))
    if dropouts:
        log.warning(
            "trial %s/%s/%s: %d subject(s) lack round %d; using their last available round",
            *trial.key, dropouts, last,
        )
    messages = None
    if trial.messages and all(s in trial.messages for s in subjects):
        messages = [trial.messages[s] for s in subjects]
    return compute_metrics(
        trial.key, trial.condition, trial.truth, subjects, pre, post,
        messages=messages,
        first_revision=first if trial.condition == "delphi" else None,
        dropouts=dropouts,
    )


def per_trial_metrics(ds: TrialDataset) -> list:
    return [trial_metrics(t) for t in ds]


# -- simulator bridge ---------------------------------------------------------

def _group_id(record) -> str:
    return f"{record.condition}-{record.index:06d}"


def metrics_from_record(record, dataset_id: str = "sim", task_id: str = "t0") -> TrialMetrics:
    """Metrics of a simulated trial, computed exactly as for ingested data."""
    states = record.states
    n = states.shape[1]
    subjects = [str(i) for i in range(n)]
    first = None
    if record.condition == "delphi":
        first = list(states[1]) if states.shape[0] > 1 else [None] * n
    messages = None
    if record.talkativeness is not None:
        messages = [int(v) for v in record.talkativeness]
    return compute_metrics(
        (dataset_id, _group_id(record), task_id), record.condition, record.truth, subjects,
        states[0], states[-1], messages=messages, first_revision=first,
    )


def records_to_rows(records, dataset_id: str = "sim", task_id: str = "t0"):
    """Long-format rows for simulated trials.

    Delphi trials contribute every round; discussion trials contribute the
    independent estimate (round 0) and the post-discussion estimate (round 1).
    """
    for rec in records:
        group = _group_id(rec)
        states = rec.states
        talk = rec.talkativeness
        for i in range(states.shape[1]):
            messages = "" if talk is None else str(int(talk[i]))
            for r in range(states.shape[0]):
                yield {
                    "dataset_id": dataset_id,
                    "condition": rec.condition,
                    "group_id": group,
                    "task_id": task_id,
                    "subject_id": str(i),
                    "round": r,
                    "estimate": repr(float(states[r, i])),
                    "truth": repr(float(rec.truth)),
                    "messages_sent": messages,
                }


def write_csv(records, target, dataset_id: str = "sim", task_id: str = "t0") -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            write_csv(records, fh, dataset_id, task_id)
        return
    writer = csv.DictWriter(target, fieldnames=list(REQUIRED_COLUMNS + OPTIONAL_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for row in records_to_rows(records, dataset_id, task_id):
        writer.writerow(row)


def records_to_csv_text(records, dataset_id: str = "sim", task_id: str = "t0") -> str:
    buf = io.StringIO()
    write_csv(records, buf, dataset_id, task_id)
    return buf.getvalue()


# -- aggregate report ---------------------------------------------------------

def _bucket_json(ms) -> dict:
    n = len(ms)
    k = sum(m.improved for m in ms)
    out = {
        "trials": n,
        "improved": k,
        "worsened": sum(m.outcome is dynamics.Outcome.WORSENED for m in ms),
        "unchanged": sum(m.outcome is dynamics.Outcome.UNCHANGED for m in ms),
        "proportion_improved": k / n if n else None,
        "test_vs_half": statkit.proportion_test(k, n, 0.5).to_json() if n else None,
    }
    return out


def _two_sample(a, b):
    if not a or not b:
        return None
    return statkit.proportion_test_2(
        sum(m.improved for m in a), len(a), sum(m.improved for m in b), len(b)
    ).to_json()


def _cluster_ids(ms, clusters):
    if clusters == "none":
        return None
    keys = [(m.dataset_id, m.group_id) for m in ms]
    if clusters == "auto" and len(set(keys)) == len(keys):
        return None
    return np.array([f"{d}\x1f{g}" for d, g in keys])


def _design(ms, columns, names, fixed_effects):
    X = [np.ones(len(ms))] + list(columns)
    names = ["intercept", *names]
    if fixed_effects == "task":
        levels = sorted({(m.dataset_id, m.task_id) for m in ms})
        for lv in levels[1:]:
            X.append(np.array([(m.dataset_id, m.task_id) == lv for m in ms], dtype=float))
            names.append(f"task[{lv[0]}/{lv[1]}]")
    return np.column_stack(X), tuple(names)


def _fit(ms, columns, names, clusters, fixed_effects, min_trials):
    if len(ms) < min_trials:
        return {"skipped": f"fit needs at least {min_trials} trials, got {len(ms)}"}
    X, names = _design(ms, columns, names, fixed_effects)
    y = np.array([m.improved for m in ms], dtype=float)
    groups = _cluster_ids(ms, clusters)
    try:
        fit = statkit.logistic_fit(X, y, groups, names=names)
    except (Separation, Singular, TooFew, ArithmeticError) as exc:
        return {"skipped": f"{type(exc).__name__}: {exc}"}
    out = fit.to_json()
    out["fixed_effects"] = fixed_effects
    return out


def _by(ms, *attrs):
    out = defaultdict(list)
    for m in ms:
        out[tuple(getattr(m, a) for a in attrs)].append(m)
    return dict(sorted(out.items()))


def _talk_accuracy(ms_with_subjects):
    """Quartile correlation between initial error and message count."""
    if not ms_with_subjects:
        return {"skipped": "no discussion trials with message counts"}
    # error quartiles within each (dataset, task); talk quartiles within dataset
    err_q, talk_q, trial_ids = [], [], []
    by_task = defaultdict(list)
    by_ds = defaultdict(list)
    for idx, (m, errors, msgs) in enumerate(ms_with_subjects):
        for e, t in zip(errors, msgs):
            by_task[(m.dataset_id, m.task_id)].append((len(err_q), e))
            by_ds[m.dataset_id].append((len(err_q), t))
            err_q.append(0)
            talk_q.append(0)
            trial_ids.append(idx)
    try:
        for rows in by_task.values():
            bins = statkit.quartile_bins([e for _, e in rows])
            for (pos, _), b in zip(rows, bins):
                err_q[pos] = int(b)
        for rows in by_ds.values():
            bins = statkit.quartile_bins([t for _, t in rows])
            for (pos, _), b in zip(rows, bins):
                talk_q[pos] = int(b)
        r = statkit.correlation(talk_q, err_q)
    except (TooFew, ZeroVariance) as exc:
        return {"skipped": f"{type(exc).__name__}: {exc}"}
    n = len(err_q)
    return {
        "method": "pearson correlation of rank quartiles (error within task, messages within dataset); t-test",
        "pairs": n,
        "trials": len(ms_with_subjects),
        "r": r,
        "p_value": statkit.correlation_pvalue(r, n),
        "cluster_robust": _cluster_slope(np.array(talk_q, float), np.array(err_q, float), np.array(trial_ids)),
    }


def _cluster_slope(x, y, clusters):
    """Slope of standardized y on standardized x with trial-clustered SE."""
    xs = (x - x.mean()) / x.std()
    ys = (y - y.mean()) / y.std()
    X = np.column_stack([np.ones_like(xs), xs])
    bread = np.linalg.inv(X.T @ X)
    beta = bread @ X.T @ ys
    resid = ys - X @ beta
    meat = np.zeros((2, 2))
    uniq, inv = np.unique(clusters, return_inverse=True)
    g = uniq.shape[0]
    if g < 2:
        return None
    scores = np.zeros((g, 2))
    np.add.at(scores, inv, X * resid[:, None])
    meat = scores.T @ scores
    n = xs.shape[0]
    adj = g / (g - 1) * (n - 1) / (n - 2)
    cov = adj * bread @ meat @ bread
    se = math.sqrt(cov[1, 1])
    z = beta[1] / se if se > 0 else float("nan")
    return {
        "method": "OLS on standardized quartiles, CR1 covariance clustered by trial, normal reference",
        "slope": float(beta[1]),
        "se": se,
        "p_value": math.erfc(abs(z) / math.sqrt(2.0)) if math.isfinite(z) else None,
        "n_clusters": int(g),
    }


def aggregate_report(
    metrics,
    clusters: str = "auto",
    fixed_effects: str = "none",
    min_fit_trials: int = MIN_FIT_TRIALS,
    subject_data=None,
) -> dict:
    """Aggregate analyses over per-trial metrics.

    ``subject_data`` optionally maps trial keys to ``(errors, messages)``
    per-subject vectors and enables the talkativeness/accuracy correlation.
    """
    if clusters not in ("auto", "group", "none"):
        raise ValidationError(f"clusters must be auto, group or none, got {clusters!r}")
    if fixed_effects not in ("none", "task"):
        raise ValidationError(f"fixed_effects must be none or task, got {fixed_effects!r}")
    ms = sorted(metrics, key=lambda m: (m.dataset_id, m.group_id, m.task_id))
    if not ms:
        raise InvariantError("no trials to report on")

    majority = {}
    for (ds, cond), group in _by(ms, "dataset_id", "condition").items():
        counts = {lb.value: sum(m.label is lb for m in group) for lb in Label}
        majority[f"{ds}/{cond}"] = {"dataset_id": ds, "condition": cond, "trials": len(group), **counts,
                                    "dropout_trials": sum(m.dropouts > 0 for m in group)}

    figure2 = {}
    for (cond,), group in _by(ms, "condition").items():
        cells = {lb.value: [m for m in group if m.label is lb] for lb in Label}
        figure2[cond] = {
            "buckets": {name: _bucket_json(cell) for name, cell in cells.items()},
            "toward_vs_away": _two_sample(cells[Label.TOWARD.value], cells[Label.AWAY.value]),
            "note": "Split trials are counted but excluded from the Toward/Away comparison",
        }

    table_a1 = []
    for (lb, cond, ds), group in _by(ms, "label", "condition", "dataset_id").items():
        row = _bucket_json(group)
        table_a1.append({"majority": lb.value, "condition": cond, "dataset_id": ds, **row})
    table_a1.sort(key=lambda r: (r["majority"], r["condition"], r["dataset_id"]))

    datasets = sorted({m.dataset_id for m in ms})
    table_a2 = {}
    for (ds, cond), group in _by(ms, "dataset_id", "condition").items():
        phis = np.array([m.phi for m in group])
        table_a2[f"{ds}/{cond}"] = _fit(group, [phis], ["phi"], clusters, fixed_effects, min_fit_trials)
    if len(datasets) > 1:
        for (cond,), group in _by(ms, "condition").items():
            phis = np.array([m.phi for m in group])
            table_a2[f"*/{cond}"] = _fit(group, [phis], ["phi"], clusters, fixed_effects, min_fit_trials)

    table_a3 = {}
    disc = [m for m in ms if m.condition == "discussion" and m.gini_messages is not None]
    for (ds,), group in _by(disc, "dataset_id").items():
        phis = np.array([m.phi for m in group])
        gini = np.array([m.gini_messages for m in group])
        table_a3[ds] = _fit(group, [phis, gini, phis * gini], ["phi", "gini", "phi:gini"], clusters, fixed_effects,
                            min_fit_trials)
    if not disc:
        table_a3["notice"] = "no discussion trials with message counts"

    figure3 = {}
    talk = [m for m in ms if m.top_talker_toward is not None]
    for (ds,), group in _by(talk, "dataset_id").items():
        toward = [m for m in group if m.top_talker_toward]
        away = [m for m in group if not m.top_talker_toward]
        figure3[ds] = {
            "top_toward": _bucket_json(toward),
            "top_away": _bucket_json(away),
            "toward_vs_away": _two_sample(toward, away),
        }
    if not talk:
        figure3["notice"] = "no discussion trials with message counts"

    talk_rows = []
    if subject_data:
        for m in ms:
            entry = subject_data.get((m.dataset_id, m.group_id, m.task_id))
            if m.condition == "discussion" and entry is not None and entry[1] is not None:
                talk_rows.append((m, entry[0], entry[1]))
    talk_accuracy = _talk_accuracy(talk_rows)

    return {
        "majority_table": majority,
        "figure2": figure2,
        "tableA1": table_a1,
        "tableA2": table_a2,
        "tableA3": table_a3,
        "figure3": figure3,
        "talk_accuracy": talk_accuracy,
    }


def subject_data(ds: TrialDataset) -> dict:
    """Per-trial (initial errors, message counts) vectors in subject order."""
    out = {}
    for trial in ds:
        subjects = trial.subjects
        errors = [abs(trial.estimates[s][0] - trial.truth) for s in subjects]
        messages = None
        if trial.messages and all(s in trial.messages for s in subjects):
            messages = [trial.messages[s] for s in subjects]
        out[trial.key] = (errors, messages)
    return out


def analyze(ds: TrialDataset, clusters: str = "auto", fixed_effects: str = "none", min_fit_trials: int = MIN_FIT_TRIALS):
    return aggregate_report(per_trial_metrics(ds), clusters, fixed_effects, min_fit_trials, subject_data(ds))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def report_json(report: dict) -> str:
    """Canonical serialization: sorted keys, NaN/inf written as null."""
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"
