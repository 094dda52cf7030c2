import json

import pytest

from streamdec.cli import main
from streamdec.synth import load_dataset


def write_small_config(path):
    path.write_text("\n".join([
        "[run]", "seed = 0",
        "[model]", "patch_bins = 5", "channels = 64", "model_dim = 32",
        "n_layers = 1", "n_heads = 2", "head_dim = 8", "ffn_mult = 2",
        "dropout = 0.1", "input_dropout = 0.1",
        "[train]", "epochs = 3", "lr_drop_epoch = 2", "batch_size = 8",
        "[augment]", "n_masks = 2", "max_mask_frac = 0.05",
        "white_noise_sd = 0.05", "offset_sd = 0.01", "input_dropout = 0.05",
        "[decode]", "beam_size = 4",
        "[synth]", "sessions = 2", "trials_per_session = 6",
        "[adapt]", "n_augment = 2",
        "",
    ]))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("cli")
    cfg = ws / "run.cfg"
    write_small_config(cfg)
    data = ws / "data.bin"
    rc = main(["gen-data", "--config", str(cfg), "--out", str(data)])
    assert rc == 0
    ckpt = ws / "model.ckpt"
    rc = main(["train", "--config", str(cfg), "--dataset", str(data),
               "--out", str(ckpt)])
    assert rc == 0
    return ws, cfg, data, ckpt


def test_gen_data_outputs(workspace):
    ws, cfg, data, _ = workspace
    bundle = load_dataset(data)
    assert len(bundle.trials) == 12
    assert (ws / "data.bin.lm").exists()


def test_train_outputs(workspace):
    ws, _, _, ckpt = workspace
    assert ckpt.exists()
    log = (ws / "model.ckpt.log.ndjson").read_text().splitlines()
    assert len(log) == 3
    recs = [json.loads(l) for l in log]
    assert all(r["schema"] == 1 for r in recs)
    assert recs[0]["lr"] == 1e-3 and recs[2]["lr"] == 1e-4


def test_eval_command(workspace):
    ws, cfg, data, ckpt = workspace
    out = ws / "eval.ndjson"
    rc = main(["eval", "--config", str(cfg), "--dataset", str(data),
               "--checkpoint", str(ckpt), "--lm", str(data) + ".lm",
               "--split", "train", "--out", str(out)])
    assert rc == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert "summary" in lines[-1]
    summary = lines[-1]["summary"]
    for key in ("wer", "per", "word_S", "word_D", "word_I", "word_N"):
        assert key in summary


def test_eval_deterministic(workspace):
    ws, cfg, data, ckpt = workspace
    outs = []
    for name in ("e1.ndjson", "e2.ndjson"):
        out = ws / name
        rc = main(["eval", "--config", str(cfg), "--dataset", str(data),
                   "--checkpoint", str(ckpt), "--lm", str(data) + ".lm",
                   "--split", "val", "--out", str(out)])
        assert rc == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]


def test_adapt_command(workspace):
    ws, cfg, data, ckpt = workspace
    out = ws / "adapt.ndjson"
    rc = main(["adapt", "--config", str(cfg), "--dataset", str(data),
               "--checkpoint", str(ckpt), "--lm", str(data) + ".lm",
               "--train-days", "1", "--heldout-days", "1",
               "--out", str(out)])
    assert rc == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    arms = {(r["day"], r["arm"]) for r in rows}
    assert arms == {(1, "no_adapt"), (1, "dietcorp")}
    assert (ws / "adapt.ndjson.ckpt").exists()


def test_bench_command(workspace):
    ws, cfg, _, ckpt = workspace
    out = ws / "bench.ndjson"
    rc = main(["bench", "--config", str(cfg), "--checkpoint", str(ckpt),
               "--chunks", "10", "--out", str(out)])
    assert rc == 0
    rec = json.loads(out.read_text())
    assert rec["analytic_macs_total"] == rec["instrumented_macs"]
    assert rec["parameters"] > 0


def test_write_config_round_trip(workspace, tmp_path):
    out = tmp_path / "default.cfg"
    rc = main(["write-config", "--out", str(out)])
    assert rc == 0
    from streamdec.config import load_run_config
    assert load_run_config(out).train.epochs == 600


def test_error_exit_code(capsys, tmp_path):
    rc = main(["train", "--dataset", str(tmp_path / "missing.bin"),
               "--out", str(tmp_path / "x.ckpt")])
    assert rc == 1
    err = capsys.readouterr().err
    rec = json.loads(err.splitlines()[-1])
    assert "error" in rec and "message" in rec
