import json
import zipfile

import numpy as np
import pytest

from enfloc import grids
from enfloc.cascade import (
    CascadeModel,
    PipelineConfig,
    TrainingItem,
    classify,
    classify_batch,
    evaluate,
    load_config,
    load_model,
    save_model,
    train,
    training_items_from_manifest,
)
from enfloc.errors import (
    ConfigError,
    CorruptModel,
    KindUnavailable,
    NeedTwoClasses,
    TooShort,
    UnsupportedVersion,
)
from enfloc.polematch import PoleDatabase, match
from enfloc.pretyping import data_type_from_ratio, nominal_from_distances
from enfloc.signal_io import Recording
from enfloc.synth import SynthCorpusSpec, default_panel, generate_corpus
from conftest import small_corpus


def test_model_layout(small_model):
    assert small_model.kinds == ["50audio", "50power", "60audio", "60power"]
    assert small_model.svms["60power"].classes == ["S-A", "S-C"]
    assert small_model.svms["50power"].shortlist_size == 3
    assert sorted(small_model.pole_dbs["50audio"].grids) == ["S-B", "S-D"]
    assert set(small_model.grid_table) == {"S-A", "S-B", "S-C", "S-D"}
    assert len(small_model.masks["60audio"]) == 10


def test_partial_kind_corpus():
    corpus = small_corpus(grids=("S-A", "S-C"), types=("power",), duration=200)
    model = train([TrainingItem(r, g, t) for r, g, t in corpus], PipelineConfig(cv_folds=2))
    assert model.kinds == ["60power"]
    audio = small_corpus(grids=("S-A",), types=("audio",), n_files=1, duration=200)[0][0]
    with pytest.raises(KindUnavailable):
        classify(model, audio)


def test_single_grid_rejected():
    corpus = small_corpus(grids=("S-A",), types=("power",), duration=150)
    with pytest.raises(NeedTwoClasses):
        train([TrainingItem(r, g, t) for r, g, t in corpus])
    with pytest.raises(NeedTwoClasses):
        train([])


def test_classify_power_file(small_model, small_tests):
    rec = next(r for r, g, t in small_tests if g == "S-C" and t == "power")
    rep = classify(small_model, rec)
    assert rep.typing.data_type == "power" and rep.typing.nominal_hz == 60
    assert rep.final_label == "S-C"
    assert "S-C" in rep.shortlist.shortlist
    d = rep.to_dict()
    assert d["schema"] == "1.0" and "timing_s" not in d
    assert set(d["pole_match"]["distances"]) == set(rep.shortlist.shortlist)
    assert "timing_s" in rep.to_dict(include_timing=True)
    assert "decision" in rep.summary()


def test_reported_sample_flow():
    # typing I/O, then the pole stage on a two-grid shortlist, then the grid lookup
    assert nominal_from_distances(10.005, 0.035) == 60
    assert data_type_from_ratio(0.375) == "power"
    db = PoleDatabase({"A": [0.0373, 0.0373j], "C": [0.0026, 0.0026j]})
    res = match([0j], db, ["A", "C"], X=2)
    assert res.chosen == "C"
    assert grids.describe(res.chosen).location == "Eastern U.S."


def test_too_short_for_features(small_model):
    rec = small_corpus(grids=("S-A",), types=("power",), n_files=1, duration=100, master=3)[0][0]
    with pytest.raises(TooShort):
        classify(small_model, rec)


def test_declared_type_override_is_noted(small_model, small_tests):
    rec = next(r for r, g, t in small_tests if g == "S-B" and t == "power")
    rep = classify(small_model, rec, declared_type="power")
    assert not rep.typing.type_overridden and rep.notes == []
    rep = classify(small_model, rec, declared_type="audio")
    assert rep.typing.type_overridden and rep.data_kind == "50audio"
    assert rep.notes


def test_baseline_only_skips_poles(small_model, small_tests):
    rec = small_tests[0][0]
    rep = classify(small_model, rec, skip_pole_match=True)
    assert rep.pole_match is None and rep.final_label == rep.baseline_label


def test_batch_order_and_failures(small_model, small_tests, tmp_path):
    inputs = [r for r, _, _ in small_tests[:3]] + [str(tmp_path / "nope.wav")]
    out = classify_batch(small_model, inputs, jobs=2)
    assert [e.report is not None for e in out] == [True, True, True, False]
    assert "UnsupportedFormat" in out[3].error
    serial = classify_batch(small_model, inputs, jobs=1)
    assert [e.to_json() for e in out] == [e.to_json() for e in serial]
    assert json.loads(out[3].to_json())["error"]


def test_evaluate_counts(small_model, small_tests):
    table, entries = evaluate(small_model, [(r, g, t) for r, g, t in small_tests])
    assert len(entries) == len(small_tests)
    correct = [e.report.final_label == g for e, (_, g, _) in zip(entries, small_tests)]
    assert table.accuracy() == pytest.approx(np.mean(correct))
    assert sum(sum(c[1] for c in r["cascade"].values()) for r in table.rows.values()) == 8
    text = table.format()
    assert "Cascade" in text and "All" in text


def test_evaluate_all_wrong_is_zero(small_model, small_tests):
    corpus = [(r, "S-Z", t) for r, g, t in small_tests]
    table, _ = evaluate(small_model, corpus, baseline_only=True)
    assert table.accuracy() == 0.0 and table.baseline_accuracy() == 0.0


def test_training_accuracy_not_below_holdout():
    # sanity mode: scoring the training corpus itself is optimistic
    train_c = small_corpus(grids=("S-A", "S-C"), types=("power",), duration=300)
    model = train([TrainingItem(r, g, t) for r, g, t in train_c], PipelineConfig(cv_folds=2))
    hold = small_corpus(grids=("S-A", "S-C"), types=("power",), duration=300, master=9)
    acc_train = evaluate(model, train_c)[0].accuracy()
    acc_hold = evaluate(model, hold)[0].accuracy()
    assert acc_train >= acc_hold


def test_save_load_round_trip(small_model, small_tests, tmp_path):
    p = tmp_path / "m.enfm"
    save_model(small_model, p)
    loaded = load_model(p)
    assert loaded.kinds == small_model.kinds and loaded.config == small_model.config
    for rec, _, _ in small_tests:
        assert classify(loaded, rec).to_json() == classify(small_model, rec).to_json()
    save_model(loaded, tmp_path / "again.enfm")
    assert (tmp_path / "again.enfm").read_bytes() == p.read_bytes()


def test_truncated_and_future_models(small_model, tmp_path):
    p = tmp_path / "m.enfm"
    save_model(small_model, p)
    data = p.read_bytes()
    (tmp_path / "cut.enfm").write_bytes(data[: len(data) // 2])
    with pytest.raises(CorruptModel):
        load_model(tmp_path / "cut.enfm")
    with zipfile.ZipFile(p) as zin, zipfile.ZipFile(tmp_path / "future.enfm", "w") as zout:
        for info in zin.infolist():
            payload = zin.read(info)
            if info.filename == "manifest.json":
                m = json.loads(payload)
                m["format_version"] = 2
                payload = json.dumps(m).encode()
            zout.writestr(info, payload)
    with pytest.raises(UnsupportedVersion):
        load_model(tmp_path / "future.enfm")


def test_tampered_array_is_corrupt(small_model, tmp_path):
    p = tmp_path / "m.enfm"
    save_model(small_model, p)
    with zipfile.ZipFile(p) as zin, zipfile.ZipFile(tmp_path / "bad.enfm", "w") as zout:
        for info in zin.infolist():
            payload = zin.read(info)
            if info.filename.endswith(".npy") and "mean" in info.filename:
                payload = payload[:-8] + b"\x00" * 8
            zout.writestr(info, payload)
    with pytest.raises(CorruptModel):
        load_model(tmp_path / "bad.enfm")


def test_config_handling(tmp_path):
    cfg = PipelineConfig()
    assert cfg.features == "table3" and cfg.match_x == 2
    assert cfg.ar_order("power") == 8 and cfg.ar_order("audio") == 12
    assert cfg.replace(match_x=3).match_x == 3
    with pytest.raises(ConfigError):
        PipelineConfig.from_mapping({"bogus": 1})
    with pytest.raises(ConfigError):
        PipelineConfig(hampel_window=4)
    (tmp_path / "c.json").write_text(json.dumps({"cv_folds": 3, "features": "all"}))
    loaded = load_config(tmp_path / "c.json")
    assert loaded.cv_folds == 3 and loaded.features == "all"


def test_manifest_items(tmp_path):
    prof = [p for p in default_panel() if p.label in ("S-A", "S-C")]
    spec = SynthCorpusSpec(tuple(prof), files_per_grid=1, duration_s=30, types=("power",))
    generate_corpus(spec, tmp_path)
    items = training_items_from_manifest(tmp_path / "manifest.csv")
    assert [(i.grid, i.data_type, i.nominal_hz) for i in items] == [
        ("S-A", "power", 60), ("S-C", "power", 60)]
    (tmp_path / "S-A_power_00.wav").unlink()
    with pytest.raises(FileNotFoundError):
        training_items_from_manifest(tmp_path / "manifest.csv")
