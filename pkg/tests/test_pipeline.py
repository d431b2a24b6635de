import json
import math
from dataclasses import asdict, replace

import pytest

from decwatt.pipeline import (
    DROP,
    KEEP,
    RULE_CHARGING,
    RULE_MAD,
    RULE_NONPOSITIVE_DECODE,
    RULE_PLAY_CAP,
    AnomalyRules,
    Sample,
    UnreviewedFlags,
    apply_review,
    best_cell,
    finalize,
    flag_anomalies,
    flatten,
    load_aggregates,
    mad_outliers,
    main,
    merge_by_model,
    summary_statistics,
)
from decwatt.records import write_jsonl


def s(device, play, model="M", decoder="omx.qcom.avc", res="sd", decode=300.0, speed=100.0, kind="hardware",
      standard="H.264", charging=False):
    return Sample(device, model, decoder, standard, kind, "Qualcomm", res, 25.0, play, decode, speed,
                  speed >= 25.0, decode <= 0, charging)


def test_merge_two_devices():
    (agg,) = merge_by_model([s("d1", 10.0), s("d2", 12.0)])
    cell = agg.cells[("omx.qcom.avc", "sd")]
    assert (cell.play_mean, cell.play_std, cell.count) == (11.0, 1.0, 2)
    assert agg.device_count == 2


def test_merge_single_device():
    (agg,) = merge_by_model([s("d1", 7.25, decode=123.0, speed=77.0)])
    c = agg.cells[("omx.qcom.avc", "sd")]
    assert (c.play_mean, c.play_std, c.decode_mean, c.decode_std, c.speed_mean, c.speed_std) == (7.25, 0, 123.0, 0, 77.0, 0)


def test_merge_groups_by_model_and_drops():
    samples = [s("d1", 10.0), s("d2", 14.0), s("d3", 5.0, model="N")]
    aggs = merge_by_model(samples, drop={samples[1].ref})
    assert [a.model for a in aggs] == ["M", "N"]
    assert aggs[0].cells[("omx.qcom.avc", "sd")].play_mean == 10.0


def test_non_realtime_cell():
    (agg,) = merge_by_model([s("d1", 10.0, speed=12.0)])
    assert agg.cells[("omx.qcom.avc", "sd")].non_realtime


def test_mad_triplet():
    assert mad_outliers([9.0, 10.0, 55.0], 3.0) == [2]


def test_rule_a_negative_decode_auto_dropped():
    flags = flag_anomalies([s("d1", 10.0, decode=-12.0)])
    assert [(f.rule, f.disposition) for f in flags] == [(RULE_NONPOSITIVE_DECODE, DROP)]


def test_rule_b_charging_auto_dropped():
    flags = flag_anomalies([s("d1", 10.0, charging=True)])
    assert [(f.rule, f.disposition) for f in flags] == [(RULE_CHARGING, DROP)]


def test_rule_c_same_model_group():
    samples = [s("d1", 9.0), s("d2", 10.0), s("d3", 55.0)]
    flags = flag_anomalies(samples)
    assert [(f.ref, f.rule) for f in flags] == [(samples[2].ref, RULE_MAD)]
    assert flags[0].disposition == "flagged"


def test_rule_d_small_group_cap():
    flags = flag_anomalies([s("d1", 9.0), s("d2", 80.0)], AnomalyRules(play_cap=40.0))
    assert [(f.ref.split("/")[0], f.rule) for f in flags] == [("d2", RULE_PLAY_CAP)]


def test_clean_fixture_has_no_flags():
    samples = [s(f"d{i}", 10.0 + 0.1 * i) for i in range(5)] + [s("e1", 8.0, model="N")]
    assert flag_anomalies(samples) == []


def test_finalize_requires_review():
    samples = [s("d1", 9.0), s("d2", 10.0), s("d3", 55.0), s("d4", 11.0, decode=-1.0)]
    flags = flag_anomalies(samples)
    with pytest.raises(UnreviewedFlags):
        finalize(samples, flags)
    mad = next(f for f in flags if f.rule == RULE_MAD)
    kept = finalize(samples, apply_review(flags, {mad.id: KEEP}))
    assert [x.device for x in kept] == ["d1", "d2", "d3"]
    dropped = finalize(samples, apply_review(flags, {mad.id: DROP}))
    assert [x.device for x in dropped] == ["d1", "d2"]


def test_auto_drop_cannot_be_overridden():
    samples = [s("d1", 9.0, decode=-1.0)]
    flags = apply_review(flag_anomalies(samples), {f"{samples[0].ref}#a": KEEP})
    assert flags[0].disposition == DROP


def test_cleaning_order_independent():
    samples = [s("d1", 9.0), s("d2", 10.0), s("d3", 10.5), s("d4", 11.0, decode=-5.0), s("d5", 12.0, charging=True)]
    flags = flag_anomalies(samples)
    auto = {f.ref for f in flags if f.disposition == DROP}
    a = merge_by_model(samples, drop=auto)
    b = merge_by_model([x for x in samples if x.ref not in auto])
    assert [x.to_dict() for x in a] == [x.to_dict() for x in b]
    # auto-dropped records never reach the MAD groups
    assert all(f.rule != RULE_MAD for f in flags)


def _winner_fixture(winners):
    """One model per entry; the named (kind, standard) gets the lowest Δplay."""
    samples = []
    for i, (kind, standard) in enumerate(winners):
        model = f"model{i}"
        samples.append(s("x" + model, 5.0, model=model, decoder="win", kind=kind, standard=standard))
        samples.append(s("x" + model, 9.0, model=model, decoder="hw.avc", kind="hardware", standard="H.264"))
    return merge_by_model(samples)


def test_hardware_everywhere():
    aggs = _winner_fixture([("hardware", "HEVC")] * 4)
    stats = summary_statistics(aggs)
    assert stats["resolutions"]["sd"]["software_win"] == {"numerator": 0, "denominator": 4, "value": 0.0}


def test_mpeg4_win_rate():
    winners = [("hardware", "MPEG-4")] * 3 + [("hardware", "H.264")] * 5 + [("software", "VP8")] * 2
    stats = summary_statistics(_winner_fixture(winners))["resolutions"]["sd"]
    assert stats["standard_win"]["MPEG-4"]["value"] == pytest.approx(0.3)
    assert stats["software_win"]["numerator"] == 2
    assert sum(v["numerator"] for v in stats["standard_win"].values()) == 10


def test_single_model_rates_degenerate():
    stats = summary_statistics(_winner_fixture([("software", "AV1")]))
    for v in stats["resolutions"]["sd"]["standard_win"].values():
        assert v["value"] in (0.0, 1.0)


def test_summary_needs_data():
    with pytest.raises(ValueError):
        summary_statistics([])


def test_tie_break_speed_then_name():
    samples = [
        s("d", 5.0, decoder="b", speed=50.0),
        s("d", 5.0, decoder="a", speed=50.0),
        s("d", 5.0, decoder="c", speed=80.0),
    ]
    (agg,) = merge_by_model(samples)
    assert best_cell(agg.cells.values()).decoder == "c"
    samples[2] = s("d", 5.0, decoder="c", speed=40.0)
    (agg,) = merge_by_model(samples)
    assert best_cell(agg.cells.values()).decoder == "a"


def test_non_realtime_fraction():
    samples = [s("d1", 5.0, decoder="av1", standard="AV1", kind="software", speed=10.0),
               s("d2", 5.0, model="N", decoder="av1", standard="AV1", kind="software", speed=60.0)]
    stats = summary_statistics(merge_by_model(samples))
    assert stats["resolutions"]["sd"]["non_realtime"]["AV1"] == {"numerator": 1, "denominator": 2, "value": 0.5}


def test_flatten_export_rows():
    import numpy as np

    from decwatt.synth import synthetic_submission

    sub = synthetic_submission(np.random.default_rng(0), "Blade A5", "SN1").to_dict()
    rows = flatten([sub])
    assert len(rows) == len(sub["records"])
    assert rows[0].delta_play == sub["records"][0]["metrics"]["delta_play"]


def test_cli_clean_merge_stats(tmp_path):
    samples = [s("d1", 9.0), s("d2", 10.0), s("d3", 55.0), s("e1", 6.0, model="N", decoder="c2.vp8", kind="software", standard="VP8")]
    raw = tmp_path / "raw.jsonl"
    write_jsonl(raw, (asdict(x) for x in samples))
    cleaned, review = tmp_path / "clean.jsonl", tmp_path / "review.json"
    assert main(["clean", "--in", str(raw), "--out", str(cleaned), "--review", str(review)]) == 2
    assert not cleaned.exists()
    data = json.loads(review.read_text())
    (flag_id,) = data
    data[flag_id]["disposition"] = DROP
    review.write_text(json.dumps(data))
    assert main(["clean", "--in", str(raw), "--out", str(cleaned), "--review", str(review)]) == 0
    assert len(cleaned.read_text().splitlines()) == 3
    aggs = tmp_path / "agg.jsonl"
    assert main(["merge", "--in", str(cleaned), "--out", str(aggs)]) == 0
    loaded = load_aggregates(aggs)
    assert loaded[0].cells[("omx.qcom.avc", "sd")].play_mean == 9.5
    stats = tmp_path / "stats.json"
    assert main(["stats", "--in", str(aggs), "--out", str(stats)]) == 0
    sd = json.loads(stats.read_text())["resolutions"]["sd"]
    assert sd["software_win"]["numerator"] == 1 and sd["models"] == 2
