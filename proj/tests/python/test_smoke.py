import math

import numpy as np
import pytest

import dclp


def test_config_defaults_and_overrides():
    c = dclp.Config()
    assert c.get("profile") == "desk"
    assert c.get("batch_size") == "16"
    assert dclp.Config(epochs=7).get("epochs") == "7"
    assert dclp.Config(learnable_scale=True).get("learnable_scale") == "true"
    paper = dclp.Config("paper")
    assert paper.get("image_size") == "224"
    assert paper.get("proj_dim") == "256"
    assert dclp.Config.from_text(c.to_text()).to_text() == c.to_text()


def test_config_typo_is_a_usage_error():
    with pytest.raises(dclp.UsageError, match="temprature"):
        dclp.Config(temprature=0.2)
    assert issubclass(dclp.UsageError, dclp.DclpError)


def test_loss_oracles():
    assert dclp.contrastive_loss(np.zeros((4, 4))) == pytest.approx(math.log(4), abs=1e-12)
    eye = np.eye(4)
    logits = dclp.similarity_logits(eye, eye, temperature=0.1)
    np.testing.assert_allclose(logits, 10 * eye)
    assert dclp.contrastive_loss(logits) == pytest.approx(math.log1p(3 * math.exp(-10)), abs=1e-12)
    rng = np.random.default_rng(0)
    m = rng.normal(size=(5, 5))
    assert dclp.contrastive_loss(m) == pytest.approx(dclp.contrastive_loss(m.T), abs=1e-12)


def test_cosine_and_normalize():
    assert dclp.cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(math.sqrt(0.5))
    assert dclp.l2_normalize([3.0, 4.0]) == pytest.approx([0.6, 0.8])
    with pytest.raises(dclp.NumericError):
        dclp.cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_metrics():
    cm = np.array([[4, 1, 0], [1, 3, 1], [0, 2, 3]])
    r = dclp.class_report(cm)
    assert r["accuracy"] == pytest.approx(10 / 15)
    assert r["mcc"] == pytest.approx(dclp.mcc(cm))
    assert [c["support"] for c in r["per_class"]] == [5, 5, 5]
    gold = [0, 1, 2, 2]
    assert dclp.confusion_matrix(gold, gold, 3).tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 2]]
    probs = [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.2, 0.2, 0.6]]
    assert dclp.roc_auc_ovr(gold, probs)["macro"] == 1.0


def test_patchify_shape():
    image = np.arange(4 * 4 * 3, dtype=float).reshape(4, 4, 3)
    patches = dclp.patchify(image, 2)
    assert patches.shape == (4, 12)
    np.testing.assert_array_equal(patches[0], image[:2, :2].reshape(-1))


def test_gradcheck_passes():
    report = dclp.gradcheck(dclp.Config())
    assert report["passed"]
    assert report["max_error"] <= 1e-5
    assert len(report["groups"]) > 10


def test_synth_train_predict(tmp_path):
    n = dclp.generate_synthetic(str(tmp_path / "data"), n_per_class=3, seed=1)
    assert n == 30
    cfg = dclp.Config(epochs=2, seed=1)
    model, history = dclp.train(str(tmp_path / "data" / "manifest.jsonl"), cfg)
    assert [h["epoch"] for h in history] == [1, 2]
    assert all(math.isfinite(h["loss"]) for h in history)

    result = model.evaluate(str(tmp_path / "data" / "manifest.jsonl"))
    assert len(result["predicted"]) == 30
    assert all(sum(p) == pytest.approx(1.0) for p in result["probs"])

    image = dclp.preprocess(dclp.load_image(str(next((tmp_path / "data" / "images").iterdir()))), 32)
    pred = model.predict(image, "happy")
    assert 0 <= pred["label"] < 10
    assert np.linalg.norm(pred["image_embedding"]) == pytest.approx(1.0, abs=1e-9)


def test_run_pipeline_exit_codes(tmp_path):
    code, _, err = dclp.run("predict", dclp.Config(out=str(tmp_path), image=str(tmp_path / "nope.ppm")))
    assert code == 3
    assert "nope.ppm" in err
    code, out, _ = dclp.run("synth", dclp.Config(out=str(tmp_path / "s"), synth_per_class=1))
    assert code == 0
    assert "wrote 10 records" in out
    assert (tmp_path / "s" / "config.txt").read_text() == dclp.Config(out=str(tmp_path / "s"), synth_per_class=1).to_text()
