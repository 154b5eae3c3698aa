import json

import numpy as np
import pytest

from molcomm import cli, io
from molcomm.detectors import LSTM3Detector, load_detector, search_baseline
from molcomm.framing import FrameSpec
from molcomm.modem import Reception, detect_sync, slice_symbols
from molcomm.pipeline import Dataset, EvalReport

PATTERN_BITS = "110011010001001"
needs_bundled = pytest.mark.skipif(
    not all((cli.DATA_DIR / f).exists() for f in cli.BUNDLED.values()),
    reason="bundled smoke checkpoints not built (make smoke-models)")


def run(*argv):
    return cli.main([str(a) for a in argv])


def manifest(path):
    return json.loads(open(str(path) + ".manifest.json").read())


@pytest.fixture(scope="module")
def surrogate_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "sur.mcds"
    assert run("gen-dataset", "--channel", "surrogate", "--noise", "0.05", "--n", 3, "--k", 16,
               "--rate", 4, "--seed", 5, "--out", out) == 0
    return out


# simulate -----------------------------------------------------------------------------

def test_simulate_malformed_bits_exit_2_without_output(tmp_path, capsys):
    out = tmp_path / "t.mctr"
    assert run("simulate", "--bits", "10x1", "--out", out) == 2
    assert not out.exists() and not (tmp_path / "t.mctr.manifest.json").exists()
    assert "malformed" in capsys.readouterr().err


def test_simulate_random_is_reproducible(tmp_path):
    a, b = tmp_path / "a.mctr", tmp_path / "b.mctr"
    for out in (a, b):
        assert run("simulate", "--random", 120, "--seed", 7, "--noise", 0.05, "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()
    m = manifest(a)
    assert m["subcommand"] == "simulate" and m["seed"] == 7 and len(m["config"]["bits"]) == 120


def test_simulate_bit_pattern_is_separable_and_exports_csv(tmp_path):
    out, csv = tmp_path / "pattern.mctr", tmp_path / "pattern.csv"
    assert run("simulate", "--bits", PATTERN_BITS, "--rate", 2, "--out", out, "--csv", csv) == 0
    trace = io.read_trace(out)
    spec = FrameSpec.from_rate(2)
    assert trace.meta["bits"] == PATTERN_BITS
    onset = detect_sync(trace, spec)
    rec = Reception(slice_symbols(trace, onset, spec, len(PATTERN_BITS)), spec, onset)
    bits = np.array([int(c) for c in PATTERN_BITS])
    # a tuned slope rule reads every symbol correctly: each 1 pushes pH up relative
    # to the running trend and each 0 pulls it down
    _, ber, _ = search_baseline([rec], [bits])
    assert ber == 0.0
    table = np.loadtxt(csv, delimiter=",", skiprows=1)
    np.testing.assert_allclose(table[:, 1], trace.samples, atol=1e-6)


def test_simulate_requires_one_bit_source(tmp_path):
    assert run("simulate", "--out", tmp_path / "x.mctr") == 2
    assert run("simulate", "--bits", "01", "--random", 3, "--out", tmp_path / "x.mctr") == 2


def test_bad_channel_config_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"channel_params": {"dt": 1.0}}))
    assert run("simulate", "--bits", "01", "--config", cfg, "--out", tmp_path / "x.mctr") == 2
    assert "bad channel configuration" in capsys.readouterr().err
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert run("simulate", "--bits", "01", "--config", cfg, "--out", tmp_path / "x.mctr") == 2


def test_config_overrides_flags_with_warning(tmp_path, caplog):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 11, "noise": 0.02}))
    out = tmp_path / "c.mctr"
    with caplog.at_level("WARNING", logger="molcomm"):
        assert run("simulate", "--random", 8, "--seed", 3, "--config", cfg, "--out", out) == 0
    assert any("seed" in r.getMessage() and "overriding" in r.getMessage() for r in caplog.records)
    assert manifest(out)["config"]["seed"] == 11 and manifest(out)["config"]["noise"] == 0.02
    ref = tmp_path / "ref.mctr"
    assert run("simulate", "--random", 8, "--seed", 11, "--noise", 0.02, "--out", ref) == 0
    assert out.read_bytes() == ref.read_bytes()


# datasets, training, grid search ------------------------------------------------------

def test_gen_dataset_writes_split_and_manifest(tmp_path):
    out = tmp_path / "d.mcds"
    assert run("gen-dataset", "--channel", "surrogate", "--n", 5, "--k", 10, "--rate", 3,
               "--split", 0.8, "--out", out) == 0
    full = Dataset.load(out)
    tr, te = Dataset.load(tmp_path / "d.train.mcds"), Dataset.load(tmp_path / "d.test.mcds")
    assert len(full) == 5 and (len(tr), len(te)) == (4, 1)
    assert full.spec_ms == [334] * 5
    assert len(manifest(out)["outputs"]) == 3


def test_train_zero_epochs_writes_initialized_checkpoint(tmp_path, surrogate_data):
    out = tmp_path / "m.mcnn"
    assert run("train", "--data", surrogate_data, "--detector", "lstm3-net", "--epochs", 0,
               "--seed", 4, "--out", out) == 0
    model = load_detector(out)
    data = Dataset.load(surrogate_data)
    fresh = LSTM3Detector(epochs=0, random_state=4).fit(data.X, data.y)
    np.testing.assert_array_equal(model.predict_proba(data.X), fresh.predict_proba(data.X))
    m = manifest(out)
    assert m["inputs"] == [str(surrogate_data)] and m["config"]["final_loss"] is None


def test_train_unknown_detector_and_missing_data(tmp_path, surrogate_data):
    assert run("train", "--data", surrogate_data, "--detector", "gru", "--out", tmp_path / "m") == 2
    assert run("train", "--data", tmp_path / "nope.mcds", "--out", tmp_path / "m") == 2


def test_grid_singleton_equals_train(tmp_path, surrogate_data):
    common = ("--data", surrogate_data, "--detector", "base-net", "--epochs", 3, "--seed", 2)
    assert run("train", *common, "--bins", 6, "--out", tmp_path / "t.mcnn") == 0
    assert run("grid", *common, "--bins-grid", 6, "--out", tmp_path / "g.mcnn") == 0
    a, b = load_detector(tmp_path / "t.mcnn"), load_detector(tmp_path / "g.mcnn")
    data = Dataset.load(surrogate_data)
    np.testing.assert_array_equal(a.predict_proba(data.X), b.predict_proba(data.X))
    report = json.loads((tmp_path / "g.mcnn.grid.json").read_text())
    assert report["best"] == {"n_bins": 6} and len(report["cells"]) == 1


def test_grid_without_axes_is_usage_error(tmp_path, surrogate_data):
    assert run("grid", "--data", surrogate_data, "--out", tmp_path / "g.mcnn") == 2


# eval ---------------------------------------------------------------------------------

def test_eval_user_models_writes_reports(tmp_path, surrogate_data):
    model = tmp_path / "b.mcnn"
    assert run("train", "--data", surrogate_data, "--detector", "baseline", "--out", model) == 0
    out, js = tmp_path / "r.csv", tmp_path / "r.json"
    assert run("eval", "--models", model, "--data", surrogate_data, "--out", out, "--json", js) == 0
    report = EvalReport.from_csv(out)
    assert report.detectors() == ["baseline"]
    assert json.loads(js.read_text())["rows"]
    assert (tmp_path / "r.table.csv").read_text().splitlines()[0] == "detector,250ms"


def test_eval_needs_models(tmp_path):
    assert run("eval", "--out", tmp_path / "r.csv") == 2


@needs_bundled
def test_eval_bundled_gives_table_layout(tmp_path):
    data = tmp_path / "test.mcds"
    assert run("gen-dataset", "--noise", 0.05, "--n", 1, "--k", 12, "--seed", 9, "--out", data) == 0
    out = tmp_path / "table1.csv"
    assert run("eval", "--bundled", "--data", data, "--out", out) == 0
    lines = (tmp_path / "table1.table.csv").read_text().strip().splitlines()
    assert lines[0] == "detector,500ms,380ms,334ms,250ms"
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) == 6 and all(len(r) == 5 for r in rows)
    assert {r[0] for r in rows} == {"baseline", "base-net", "cnn-net", "lstm3-net", "cnn-lstm3-net",
                                   "sblstm3-net10"}
    assert all(0.0 <= float(v) <= 1.0 for r in rows for v in r[1:])
    assert manifest(out)["subcommand"] == "eval"


# demo-text ----------------------------------------------------------------------------

@needs_bundled
def test_demo_text_noiseless_roundtrip(tmp_path, capsys):
    out = tmp_path / "demo.json"
    assert run("demo-text", "hi", "--out", out) == 0
    text = capsys.readouterr().out
    assert "received: 'hi'" in text and "bit errors: 0/16" in text
    assert "sblstm3-net10 at 2 bps" in text
    result = json.loads(out.read_text())
    assert result["received"] == "hi" and result["char_errors"] == 0
    assert np.allclose(np.sum(result["pmfs"], axis=1), 1.0)
    assert manifest(out)["subcommand"] == "demo-text"


def test_demo_text_empty_message_is_usage_error(capsys):
    assert run("demo-text", "") == 2
    assert "empty message" in capsys.readouterr().err


@needs_bundled
def test_demo_text_noisy_reports_errors_and_exits_0(tmp_path, capsys):
    out = tmp_path / "noisy.json"
    assert run("demo-text", "noisy channel", "--rate", 4, "--noise", 0.15, "--seed", 0,
               "--bundled", "baseline", "--out", out) == 0
    assert "<- error" in capsys.readouterr().out
    result = json.loads(out.read_text())
    assert result["bit_errors"] / len(result["bits"]) > 0.2
