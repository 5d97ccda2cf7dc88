import io
import json

import numpy as np
import pytest

from crowdnet import pipeline, simlab
from crowdnet.dynamics import Outcome
from crowdnet.errors import InvariantError, ParseError, SchemaError
from crowdnet.heuristic import Label
from crowdnet.simlab import TrialSpec

HEADER = "dataset_id,condition,group_id,task_id,subject_id,round,estimate,truth,messages_sent\n"


def _csv(rows, header=HEADER):
    return io.StringIO(header + "".join(",".join(map(str, r)) + "\n" for r in rows))


def _trial(estimates, truth, messages=None, post=None, cond="discussion", group="g1", task="t1", ds="d"):
    rows = []
    post = estimates if post is None else post
    for i, (a, b) in enumerate(zip(estimates, post)):
        m = "" if messages is None else messages[i]
        rows.append((ds, cond, group, task, i + 1, 0, a, truth, m))
        rows.append((ds, cond, group, task, i + 1, 1, b, truth, m))
    return rows


def test_minimal_file_is_one_trial():
    ds = pipeline.load_csv(_csv(_trial(list(range(20)), 7.0, [1] * 20)))
    assert len(ds) == 1
    (trial,) = ds
    assert trial.condition == "discussion" and len(trial.subjects) == 20


def test_empty_file():
    with pytest.raises(InvariantError):
        pipeline.load_csv(io.StringIO(HEADER))


def test_missing_column():
    with pytest.raises(SchemaError, match="truth"):
        pipeline.load_csv(io.StringIO("dataset_id,condition,group_id,task_id,subject_id,round,estimate\n"))


def test_truth_varies_within_task():
    rows = _trial([1, 2], 3.0) + _trial([1, 2], 4.0, group="g2")
    with pytest.raises(InvariantError, match="t1"):
        pipeline.load_csv(_csv(rows))


def test_parse_error_reports_line():
    rows = _trial([1, 2], 3.0)
    rows[2] = ("d", "discussion", "g1", "t1", 2, 0, "abc", 3.0, "")
    with pytest.raises(ParseError) as err:
        pipeline.load_csv(_csv(rows))
    assert err.value.line == 4


@pytest.mark.parametrize(
    "bad",
    [
        ("d", "chat", "g1", "t1", 1, 0, 1.0, 3.0, ""),
        ("d", "discussion", "g1", "t1", 1, -1, 1.0, 3.0, ""),
        ("d", "discussion", "g1", "t1", 1, 0, "nan", 3.0, ""),
        ("d", "discussion", "g1", "t1", 1, 0, 1.0, 3.0, "1.5"),
    ],
)
def test_bad_rows(bad):
    with pytest.raises(ParseError):
        pipeline.load_csv(_csv([bad]))


def test_missing_round_zero_and_duplicates():
    with pytest.raises(InvariantError, match="round-0"):
        pipeline.load_csv(_csv([("d", "delphi", "g", "t", 1, 1, 1.0, 2.0, "")]))
    dup = [("d", "delphi", "g", "t", 1, 0, 1.0, 2.0, "")] * 2
    with pytest.raises(InvariantError, match="duplicate"):
        pipeline.load_csv(_csv(dup))


def test_condition_varies_within_group_task():
    rows = [("d", "delphi", "g", "t", 1, 0, 1.0, 2.0, ""), ("d", "discussion", "g", "t", 2, 0, 1.0, 2.0, "")]
    with pytest.raises(InvariantError, match="condition"):
        pipeline.load_csv(_csv(rows))


def test_column_order_free_and_no_messages_column():
    text = "truth,estimate,round,subject_id,task_id,group_id,condition,dataset_id\n3,1,0,a,t,g,delphi,d\n3,5,0,b,t,g,delphi,d\n"
    (trial,) = pipeline.load_csv(io.StringIO(text))
    assert trial.estimates == {"a": {0: 1.0}, "b": {0: 5.0}}


def test_constructed_discussion_trial():
    ds = pipeline.load_csv(_csv(_trial([1, 2, 3, 4, 10], 3, [0, 0, 5, 1, 1])))
    (m,) = pipeline.per_trial_metrics(ds)
    assert m.phi == pytest.approx(0.6) and m.label is Label.TOWARD
    assert m.top_talker == "3" and m.top_talker_toward is True
    assert m.outcome is Outcome.UNCHANGED
    assert m.gini_messages == pytest.approx(22 / 35)


def test_all_silent_trial_keeps_trial():
    ds = pipeline.load_csv(_csv(_trial([1, 2, 3, 4, 10], 3, [0] * 5)))
    (m,) = pipeline.per_trial_metrics(ds)
    assert m.gini_messages is None and m.top_talker_toward is None
    assert m.phi == pytest.approx(0.6)


def test_talkativeness_tie_goes_to_lowest_id():
    rows = _trial([1, 2, 3, 4, 10], 3, [2, 5, 0, 5, 1])
    # ids 1..5; subjects 2 and 4 tie on 5 messages
    (m,) = pipeline.per_trial_metrics(pipeline.load_csv(_csv(rows)))
    assert m.top_talker == "2"


def test_numeric_ids_sort_numerically():
    rows = [("d", "delphi", "g", "t", sid, 0, v, 0.0, "") for sid, v in (("10", 1.0), ("9", 2.0), ("2", 3.0))]
    (trial,) = pipeline.load_csv(_csv(rows))
    assert trial.subjects == ["2", "9", "10"]


def test_dropout_falls_back_to_last_round(caplog):
    rows = [
        ("d", "delphi", "g", "t", 1, 0, 0.0, 6.0, ""),
        ("d", "delphi", "g", "t", 1, 1, 4.0, 6.0, ""),
        ("d", "delphi", "g", "t", 1, 2, 5.0, 6.0, ""),
        ("d", "delphi", "g", "t", 2, 0, 10.0, 6.0, ""),
        ("d", "delphi", "g", "t", 2, 1, 6.0, 6.0, ""),
    ]
    with caplog.at_level("WARNING"):
        (m,) = pipeline.per_trial_metrics(pipeline.load_csv(_csv(rows)))
    assert m.dropouts == 1 and "last available round" in caplog.text
    assert m.post_mean == pytest.approx(5.5)
    assert m.outcome is Outcome.IMPROVED
    # round 0 -> 1 revision against the peer's round-0 estimate
    assert m.stubbornness == pytest.approx((0.6, 0.6))


def test_zero_inclusion_increases_gini():
    base = _trial([1, 2, 3, 4], 3, [3, 1, 4, 1])
    with_silent = _trial([1, 2, 3, 4, 5, 6], 3, [3, 1, 4, 1, 0, 0])
    (a,) = pipeline.per_trial_metrics(pipeline.load_csv(_csv(base)))
    (b,) = pipeline.per_trial_metrics(pipeline.load_csv(_csv(with_silent)))
    assert b.gini_messages > a.gini_messages


# -- simulator round trip -------------------------------------------------------

@pytest.mark.parametrize(
    "spec",
    [TrialSpec(condition="delphi", location_jitter=0.5), TrialSpec(), TrialSpec(discussion_network="star")],
    ids=["delphi", "talkativeness", "star"],
)
def test_round_trip_matches_simulator(spec):
    rep = simlab.run_ensemble(spec, 25, base_seed=6)
    text = pipeline.records_to_csv_text(rep.records)
    ingested = pipeline.per_trial_metrics(pipeline.load_csv(io.StringIO(text)))
    direct = [pipeline.metrics_from_record(r) for r in rep.records]
    assert len(ingested) == len(direct)
    for a, b in zip(ingested, direct):
        ja, jb = a.to_json(), b.to_json()
        for key in ja:
            va, vb = ja[key], jb[key]
            if isinstance(va, float):
                assert va == pytest.approx(vb, abs=1e-12), key
            elif isinstance(va, list):
                assert va == pytest.approx(vb, abs=1e-12), key
            else:
                assert va == vb, key


def test_sim_metrics_agree_with_records():
    rep = simlab.run_ensemble(TrialSpec(condition="delphi"), 10, base_seed=1)
    for rec in rep.records:
        m = pipeline.metrics_from_record(rec)
        assert m.phi == rec.phi.phi and m.outcome is rec.outcome


# -- aggregate report ---------------------------------------------------------------

def _metrics(n, label, outcome, cond="discussion", ds="d", gini=0.3, toward=None):
    phi = {Label.TOWARD: 0.7, Label.AWAY: 0.3, Label.SPLIT: 0.5}[label]
    return [
        pipeline.TrialMetrics(ds, f"{label.value}-{i}", "t", cond, 5, 0.0, phi, False, label, outcome, 1.0, 0.5,
                              gini_messages=gini, top_talker_toward=toward)
        for i in range(n)
    ]


def test_all_improved_report():
    ms = _metrics(12, Label.TOWARD, Outcome.IMPROVED) + _metrics(9, Label.AWAY, Outcome.IMPROVED)
    ms += _metrics(3, Label.SPLIT, Outcome.IMPROVED)
    rep = pipeline.aggregate_report(ms)
    buckets = rep["figure2"]["discussion"]["buckets"]
    assert all(b["proportion_improved"] == 1.0 for b in buckets.values())
    assert rep["figure2"]["discussion"]["toward_vs_away"]["p_value"] == 1.0
    assert rep["majority_table"]["d/discussion"]["trials"] == 24
    counts = rep["majority_table"]["d/discussion"]
    assert counts["Toward"] + counts["Away"] + counts["Split"] == counts["trials"]


def test_fits_skipped_below_minimum():
    ms = _metrics(4, Label.TOWARD, Outcome.IMPROVED) + _metrics(4, Label.AWAY, Outcome.WORSENED)
    rep = pipeline.aggregate_report(ms)
    assert "skipped" in rep["tableA2"]["d/discussion"]
    assert "skipped" in rep["tableA3"]["d"]


def test_report_sections_and_methods():
    rep_spec = TrialSpec(location_jitter=1.0)
    records = simlab.run_ensemble(rep_spec, 80, base_seed=3).records
    ds = pipeline.load_csv(io.StringIO(pipeline.records_to_csv_text(records)))
    rep = pipeline.analyze(ds)
    assert set(rep) == {"majority_table", "figure2", "tableA1", "tableA2", "tableA3", "figure3", "talk_accuracy"}
    assert "method" in rep["tableA2"]["sim/discussion"]
    assert rep["tableA3"]["sim"]["terms"][3]["name"] == "phi:gini"
    assert "method" in rep["talk_accuracy"] and "method" in rep["figure3"]["sim"]["toward_vs_away"]
    total = sum(row["trials"] for row in rep["tableA1"])
    assert total == 80
    text = pipeline.report_json(rep)
    assert text == pipeline.report_json(pipeline.analyze(pipeline.load_csv(io.StringIO(pipeline.records_to_csv_text(records)))))
    json.loads(text)


def test_cluster_options():
    spec = TrialSpec(condition="delphi", location_jitter=1.0)
    records = simlab.run_ensemble(spec, 40, base_seed=5).records
    ms = [pipeline.metrics_from_record(r, task_id=t) for r in records for t in ("t0",)]
    ms += [pipeline.metrics_from_record(r, task_id="t1") for r in records]
    auto = pipeline.aggregate_report(ms, clusters="auto")["tableA2"]["sim/delphi"]
    none = pipeline.aggregate_report(ms, clusters="none")["tableA2"]["sim/delphi"]
    fe = pipeline.aggregate_report(ms, clusters="group", fixed_effects="task")["tableA2"]["sim/delphi"]
    assert auto["n_clusters"] == 40 and none["n_clusters"] is None
    assert [t["name"] for t in fe["terms"]] == ["intercept", "phi", "task[sim/t1]"]
    with pytest.raises(ValueError):
        pipeline.aggregate_report(ms, clusters="dataset")


def test_report_json_nan_to_null():
    text = pipeline.report_json({"a": float("nan"), "b": np.float64(1.5), "c": np.bool_(True)})
    assert json.loads(text) == {"a": None, "b": 1.5, "c": True}
