"""End-to-end command-line flows in a temp directory, including exit codes."""

import json

import numpy as np
import pytest

from docrel.cli import (EXIT_BAD_CONFIG, EXIT_BAD_DATA, EXIT_CHECKPOINT_MISMATCH,
                        EXIT_MISSING_FILE, EXIT_NOT_FOUND, EXIT_OK, main)
from gen import docred_json, rule_corpus

CONFIG = """
# toy run
word_dim = 6
type_dim = 2
coref_dim = 2
hidden_size = 4
gcn_dim = 8
gcn_layers = 1
classifier_hidden = 6
topk = 2
dropout = 0.1
batch_size = 2
learning_rate = 0.01
epochs = 2
eval_every = 1
seed = 17
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(13)
    docs = rule_corpus(rng, 6)
    (root / "train.json").write_text(json.dumps(docred_json(docs[:4])), encoding="utf-8")
    (root / "dev.json").write_text(json.dumps(docred_json(docs[4:])), encoding="utf-8")
    (root / "config.txt").write_text(CONFIG, encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def trained(workspace):
    out = workspace / "run1"
    code = main(["train", "--data", str(workspace / "train.json"),
                 "--dev", str(workspace / "dev.json"),
                 "--config", str(workspace / "config.txt"), "--out", str(out)])
    assert code == EXIT_OK
    return out


def test_train_writes_artifacts(trained):
    assert (trained / "model.ckpt").exists()
    assert (trained / "config.txt").exists()
    history = [json.loads(line) for line in
               (trained / "history.jsonl").read_text().splitlines()]
    assert len(history) == 2
    assert all("loss" in row for row in history)


def test_train_is_reproducible(workspace, trained):
    out2 = workspace / "run2"
    code = main(["train", "--data", str(workspace / "train.json"),
                 "--dev", str(workspace / "dev.json"),
                 "--config", str(workspace / "config.txt"), "--out", str(out2)])
    assert code == EXIT_OK
    assert (out2 / "model.ckpt").read_bytes() == (trained / "model.ckpt").read_bytes()
    assert (out2 / "history.jsonl").read_bytes() == (trained / "history.jsonl").read_bytes()


def test_eval_from_checkpoint(workspace, trained, capsys):
    out = workspace / "eval1"
    code = main(["eval", "--data", str(workspace / "dev.json"),
                 "--checkpoint", str(trained / "model.ckpt"),
                 "--train", str(workspace / "train.json"), "--out", str(out)])
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert set(report) >= {"overall", "ign", "intra", "inter", "infer"}
    assert "overall" in capsys.readouterr().out


def test_predict_then_eval_pred_file(workspace, trained):
    pred_dir = workspace / "pred"
    code = main(["predict", "--data", str(workspace / "dev.json"),
                 "--checkpoint", str(trained / "model.ckpt"), "--out", str(pred_dir)])
    assert code == EXIT_OK
    rows = json.loads((pred_dir / "predictions.json").read_text())
    for row in rows:
        assert set(row) == {"title", "h_idx", "t_idx", "r", "score"}
    out = workspace / "eval2"
    code = main(["eval", "--data", str(workspace / "dev.json"),
                 "--pred", str(pred_dir / "predictions.json"),
                 "--train", str(workspace / "train.json"), "--out", str(out)])
    assert code == EXIT_OK


def test_eval_empty_prediction_file(workspace, capsys):
    empty = workspace / "empty_pred.json"
    empty.write_text("[]", encoding="utf-8")
    out = workspace / "eval3"
    code = main(["eval", "--data", str(workspace / "dev.json"),
                 "--pred", str(empty), "--out", str(out)])
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["overall"]["f1"] == 0.0
    assert report["overall"]["tp"] == 0


def test_explain_outputs_record(workspace, trained, capsys):
    docs = json.loads((workspace / "dev.json").read_text())
    title = docs[0]["title"]
    code = main(["explain", "--data", str(workspace / "dev.json"),
                 "--checkpoint", str(trained / "model.ckpt"),
                 "--doc", title, "--pair", "0,1"])
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "pair: head=0 tail=1" in text


def test_graph_stats_census(workspace, capsys):
    code = main(["graph-stats", "--data", str(workspace / "train.json")])
    assert code == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert stats["documents"] == 4
    assert stats["relations"] == 4
    assert stats["intra_facts"] + stats["inter_facts"] == stats["facts"]
    assert 0.0 < stats["inter_fact_share"] < 1.0
    assert stats["two_hop_instances"] > 0
    assert set(stats["edges"]) == {"intra-entity", "inter-entity",
                                   "sentence-mention", "sentence-document"}


def test_missing_file_exit_code(workspace, capsys):
    code = main(["graph-stats", "--data", str(workspace / "nope.json")])
    assert code == EXIT_MISSING_FILE
    assert "code=missing-file" in capsys.readouterr().err


def test_bad_config_key_exit_code(workspace, capsys):
    bad = workspace / "bad.txt"
    bad.write_text("no_such_knob = 3\n", encoding="utf-8")
    code = main(["train", "--data", str(workspace / "train.json"),
                 "--config", str(bad), "--out", str(workspace / "x")])
    assert code == EXIT_BAD_CONFIG
    assert "code=bad-config" in capsys.readouterr().err


def test_checkpoint_config_mismatch_exit_code(workspace, trained, capsys):
    other = workspace / "other.txt"
    other.write_text(CONFIG.replace("seed = 17", "seed = 18"), encoding="utf-8")
    code = main(["eval", "--data", str(workspace / "dev.json"),
                 "--checkpoint", str(trained / "model.ckpt"),
                 "--config", str(other), "--out", str(workspace / "y")])
    assert code == EXIT_CHECKPOINT_MISMATCH
    assert "code=checkpoint-mismatch" in capsys.readouterr().err


def test_malformed_data_exit_code(workspace, capsys):
    bad = workspace / "bad.json"
    bad.write_text("[{", encoding="utf-8")
    code = main(["graph-stats", "--data", str(bad)])
    assert code == EXIT_BAD_DATA


def test_explain_unknown_document(workspace, trained, capsys):
    code = main(["explain", "--data", str(workspace / "dev.json"),
                 "--checkpoint", str(trained / "model.ckpt"),
                 "--doc", "missing-title", "--pair", "0,1"])
    assert code == EXIT_NOT_FOUND


def test_unknown_flag_rejected(workspace):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", str(workspace / "train.json"),
              "--out", str(workspace / "z"), "--bogus"])
    assert exc.value.code == 2


def test_epochs_zero_checkpoint_matches_eval_of_init(workspace):
    # train --epochs 0 then eval: the checkpoint is the raw initialization
    out0 = workspace / "zero"
    code = main(["train", "--data", str(workspace / "train.json"),
                 "--config", str(workspace / "config.txt"),
                 "--epochs", "0", "--out", str(out0)])
    assert code == EXIT_OK

    from docrel.checkpoint import load_checkpoint
    from docrel.config import TrainingConfig
    from docrel.corpus import build_vocabulary, load_docred
    from docrel.model import RelationModel

    ckpt = load_checkpoint(out0 / "model.ckpt")
    cfg = TrainingConfig.from_file(workspace / "config.txt")
    cfg.epochs = 0
    vocab = build_vocabulary(load_docred(workspace / "train.json"))
    fresh = RelationModel(cfg, vocab)
    for name, arr in fresh.state_arrays().items():
        assert ckpt.arrays[name].tobytes() == arr.tobytes()
