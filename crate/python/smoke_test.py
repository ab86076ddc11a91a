"""Quick end-to-end check of the Python bindings.

Build first:
    cargo build --release -p fraudchain-py
    cp target/release/libpyfraudchain.so python/pyfraudchain.so
"""
import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyfraudchain as fc


def main():
    data = fc.generate(n_claims=4000, seed=3)
    assert len(data) == 4000
    assert data.fraud_count == round(4000 * 0.0995)

    train, test = data.split(0.7, 3)
    assert len(train) == 2800 and len(test) == 1200

    markov = fc.MarkovDetector.fit(train)
    gbm = fc.GbmDetector.fit(train, n_trees=30, cv_folds=3, seed=3)
    labels = test.labels()

    for name, model in [("markov", markov), ("gbm", gbm)]:
        scores = model.score(test)
        preds = [s > model.threshold for s in scores]
        tp, fp, fn, tn = fc.confusion(labels, preds)
        assert tp + fp + fn + tn == len(test)
        area = fc.auc(labels, scores)
        points = fc.roc(labels, scores)
        assert points[0][:2] == (0.0, 0.0) and points[-1][:2] == (1.0, 1.0)
        print(f"{name}: auc={area:.4f} metrics={dict(fc.metrics(tp, fp, fn, tn))}")

    assert gbm.cv_deviance is not None and len(gbm.cv_deviance) == 30
    dev = gbm.train_deviance
    assert all(b <= a + 1e-9 for a, b in zip(dev, dev[1:]))

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "gbm.toml")
        gbm.save(path)
        again = fc.GbmDetector.load(path)
        assert again.score(test) == gbm.score(test)

        path = os.path.join(tmp, "markov.toml")
        markov.save(path)
        assert fc.MarkovDetector.load(path).to_toml() == markov.to_toml()

        csv_path = os.path.join(tmp, "data.csv")
        test.write_csv(csv_path)
        assert fc.Dataset.read_csv(csv_path).labels() == labels

        config = "[generate]\nn_claims = 3000\n[gbm]\nn_trees = 20\ncv_folds = 3\n"
        cmp = json.loads(fc.run_paper(os.path.join(tmp, "run"), config=config))
        assert [m["metric"] for m in cmp["metrics"]][-1] == "AUC"

    try:
        fc.generate(fraud_rate=1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid fraud rate accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
