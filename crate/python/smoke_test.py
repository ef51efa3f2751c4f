"""Smoke test for the sdpkit Python extension.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import math
import pathlib
import re
import tempfile

import sdpkit

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def check_crf():
    crf = sdpkit.LinearChainCrf(["A", "B"], [[0.5, -0.5], [1.0, 0.0]])
    em = [[1.0, 0.0], [0.0, 2.0]]
    log_z = crf.log_partition(em)
    want = math.log(math.exp(1.5) + math.exp(2.5) + math.exp(1.0) + math.exp(2.0))
    assert abs(log_z - want) < 1e-12, log_z
    path, score = crf.viterbi(em)
    assert path == ["A", "B"] and abs(score - 2.5) < 1e-12, (path, score)
    p_a = crf.marginals(em)[0][0]
    assert abs(p_a - (math.exp(1.5) + math.exp(2.5)) / math.exp(want)) < 1e-12, p_a
    assert abs(crf.nll(em, ["A", "B"]) - (want - 2.5)) < 1e-12
    for row in crf.edge_marginals(em):
        assert abs(sum(row) - 1.0) < 1e-12


def check_metrics():
    r = sdpkit.conll_f1([["B-PER", "I-PER", "O", "B-LOC"]], [["B-PER", "I-PER", "O", "O"]])
    assert r["micro_precision"] == 1.0 and r["micro_recall"] == 0.5, r
    r = sdpkit.classification_prf(["a", "a", "b"], ["a", "b", "b"])
    assert abs(r["macro_f1"] - 2 / 3) < 1e-12, r
    assert sdpkit.extract_spans(["I-PER"]) == [("PER", 0, 0)]
    assert sdpkit.token_accuracy([["A", "B"]], [["A", "A"]]) == 0.5


def check_graph():
    text = (FIXTURES / "classifier.toml").read_text()
    order = sdpkit.instantiation_order(text)
    model = [i for i in order if i.startswith("model")]
    assert model == ["model.encoder.embedder[0]", "model.encoder", "model"], order


def check_train_and_predict():
    with tempfile.TemporaryDirectory() as tmp:
        text = (FIXTURES / "classifier.toml").read_text()
        for key in ("train", "dev", "test"):
            text = re.sub(rf'^{key} = "(.*)"$', lambda m: f'{key} = "{FIXTURES / m.group(1)}"', text, flags=re.M)
        ckpt = pathlib.Path(tmp) / "ckpt"
        text = re.sub(r"^checkpoint_dir = .*$", f'checkpoint_dir = "{ckpt}"', text, flags=re.M)
        exp = pathlib.Path(tmp) / "exp.toml"
        exp.write_text(text)
        summary = sdpkit.train(str(exp))
        assert summary["best_metric"] > 0.8, summary
        model = sdpkit.Model.load(str(ckpt))
        assert model.kind == "classifier"
        pred = model.predict("we use the toolkit of prior work")
        assert pred["label"] in model.labels
        assert abs(sum(pred["scores"].values()) - 1.0) < 1e-9
        report = model.evaluate("test")
        assert report["macro_f1"] > 0.8, report
        try:
            model.predict("   ")
        except ValueError:
            pass
        else:
            raise AssertionError("empty input accepted")


if __name__ == "__main__":
    check_crf()
    check_metrics()
    check_graph()
    check_train_and_predict()
    print("python smoke test ok")
