"""Train reference tree models and export them as boxprob fixture bundles.

A bundle directory holds model.json, samples.csv, uncertainty.json and
manifest.json. Every bundle is checked for label fidelity: the exported
model, evaluated with "x <= threshold goes left", must reproduce the
training library's predictions on every exported sample.

    python boxprob_export.py export-iris --kind decision_tree --depth 4 --out DIR
    python boxprob_export.py export-mnist --csv mnist.csv.gz --resize 3 \
        --kind decision_tree --depth 4 --out DIR
"""

import argparse
import gzip
import json
import math
import os
import platform
import sys

import numpy as np


def _require(module, hint):
    try:
        return __import__(module)
    except ImportError:
        sys.exit(f"error: {module} is not installed ({hint})")


# ---------------------------------------------------------------- sklearn


def sklearn_tree_nodes(tree):
    t = tree.tree_
    nodes = []
    for i in range(t.node_count):
        if t.children_left[i] == -1:
            nodes.append({"leaf_label": int(np.argmax(t.value[i][0]))})
        else:
            nodes.append({
                "feature": int(t.feature[i]),
                "threshold": float(t.threshold[i]),
                "left": int(t.children_left[i]),
                "right": int(t.children_right[i]),
            })
    return {"nodes": nodes, "root": 0}


def export_sklearn(model, n_features, n_classes):
    from sklearn.ensemble import RandomForestClassifier

    if isinstance(model, RandomForestClassifier):
        trees = [sklearn_tree_nodes(est) for est in model.estimators_]
        kind = "random_forest"
    else:
        trees = [sklearn_tree_nodes(model)]
        kind = "decision_tree"
    return {"type": kind, "n_features": n_features, "n_classes": n_classes,
            "feature_bounds": None, "trees": trees}


def sklearn_reference(model, x):
    """Labels the exported document must reproduce.

    A forest is compared against the majority vote of its trees (ties to the
    lowest class), which is the exported semantics; sklearn's own predict
    averages leaf probabilities and is reported separately.
    """
    from sklearn.ensemble import RandomForestClassifier

    if isinstance(model, RandomForestClassifier):
        votes = np.stack([est.predict(x).astype(int) for est in model.estimators_], axis=1)
        k = len(model.classes_)
        counts = np.stack([(votes == c).sum(axis=1) for c in range(k)], axis=1)
        return counts.argmax(axis=1)
    return model.predict(x).astype(int)


# ---------------------------------------------------------------- xgboost


def xgb_tree_nodes(tree):
    # Nodes of an xgboost JSON dump, renumbered depth-first from 0.
    nodes = []

    def visit(node):
        index = len(nodes)
        nodes.append(None)
        if "leaf" in node:
            nodes[index] = {"leaf_score": float(node["leaf"])}
            return index
        children = {c["nodeid"]: c for c in node["children"]}
        feature = int(node["split"].lstrip("f"))
        left = visit(children[node["yes"]])
        right = visit(children[node["no"]])
        nodes[index] = {"feature": feature, "threshold": float(node["split_condition"]),
                        "left": left, "right": right}
        return index

    visit(tree)
    return {"nodes": nodes, "root": 0}


def export_xgboost(booster, n_features, n_classes):
    config = json.loads(booster.save_config())
    learner = config["learner"]
    raw_base = learner["learner_model_param"]["base_score"]
    base = [float(v) for v in json.loads(raw_base)] if raw_base.startswith("[") else [float(raw_base)]
    dumps = [json.loads(d) for d in booster.get_dump(dump_format="json")]
    trees = [xgb_tree_nodes(d) for d in dumps]
    objective = learner["objective"]["name"]
    if n_classes == 2:
        # binary:logistic keeps base_score as a probability.
        p = base[0]
        margin = math.log(p / (1.0 - p))
        return {"type": "boosted_ensemble", "n_features": n_features, "n_classes": 2,
                "feature_bounds": None, "objective": "binary_logistic", "base_score": margin,
                "trees": trees}
    assert objective in ("multi:softprob", "multi:softmax"), objective
    tree_class = [i % n_classes for i in range(len(trees))]
    # Per-class intercepts are folded into the first tree of each class.
    if len(base) == n_classes and len(set(base)) > 1:
        for c in range(n_classes):
            for node in trees[c]["nodes"]:
                if "leaf_score" in node:
                    node["leaf_score"] += base[c]
        base_score = 0.0
    else:
        base_score = base[0]
    return {"type": "boosted_ensemble", "n_features": n_features, "n_classes": n_classes,
            "feature_bounds": None, "objective": "multi_softmax", "base_score": base_score,
            "tree_class": tree_class, "trees": trees}


# ---------------------------------------------------------------- evaluation


def classify(doc, x):
    """Reference evaluator for the model document ("<=" goes left)."""

    def leaf(tree):
        node = tree["nodes"][tree["root"]]
        while "feature" in node:
            node = tree["nodes"][node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]]
        return node

    k = doc["n_classes"]
    if doc["type"] == "decision_tree":
        return leaf(doc["trees"][0])["leaf_label"]
    if doc["type"] == "random_forest":
        counts = [0] * k
        for t in doc["trees"]:
            counts[leaf(t)["leaf_label"]] += 1
        return int(np.argmax(counts))
    if doc["objective"] == "binary_logistic":
        score = doc["base_score"] + sum(leaf(t)["leaf_score"] for t in doc["trees"])
        return int(score > 0.0)
    scores = [doc["base_score"]] * k
    for t, c in zip(doc["trees"], doc["tree_class"]):
        scores[c] += leaf(t)["leaf_score"]
    return int(np.argmax(scores))


def validate_schema(doc):
    assert doc["type"] in ("decision_tree", "random_forest", "boosted_ensemble")
    n, k = doc["n_features"], doc["n_classes"]
    for t in doc["trees"]:
        for node in t["nodes"]:
            if "feature" in node:
                assert 0 <= node["feature"] < n
                assert 0 <= node["left"] < len(t["nodes"]) and 0 <= node["right"] < len(t["nodes"])
            elif "leaf_label" in node:
                assert 0 <= node["leaf_label"] < k
            else:
                assert math.isfinite(node["leaf_score"])


# ---------------------------------------------------------------- bundles


def mvn_uncertainty(n, variance):
    return {"kind": "mvn", "additive": True,
            "cov": [[variance if i == j else 0.0 for j in range(n)] for i in range(n)]}


def write_bundle(out, doc, x_test, reference, uncertainty, manifest):
    validate_schema(doc)
    mismatches = [i for i, row in enumerate(x_test) if classify(doc, row) != int(reference[i])]
    manifest["fidelity_mismatches"] = mismatches
    if mismatches:
        sys.exit(f"error: exported model disagrees with the source library on samples {mismatches}")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "model.json"), "w") as f:
        json.dump(doc, f)
        f.write("\n")
    with open(os.path.join(out, "samples.csv"), "w") as f:
        f.write(",".join(f"f{i}" for i in range(doc["n_features"])) + "\n")
        for row in x_test:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(os.path.join(out, "uncertainty.json"), "w") as f:
        json.dump(uncertainty, f, indent=1)
        f.write("\n")
    manifest["labels"] = [int(v) for v in reference]
    manifest["versions"] = {"python": platform.python_version(), "numpy": np.__version__}
    for module in ("sklearn", "xgboost"):
        try:
            manifest["versions"][module] = __import__(module).__version__
        except ImportError:
            pass
    manifest["split_convention"] = ("thresholds copied unchanged; the source library's strict '<' "
                                    "differs from '<=' only on a measure-zero set")
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
    print(f"{out}: {len(x_test)} samples, {len(doc['trees'])} trees")


def norta_iris_uncertainty():
    # Noise centred on the sample: normal / exponential / chi-square / lognormal.
    spearman = [[1.0, 0.2, 0.1, 0.3],
                [0.2, 1.0, 0.25, 0.15],
                [0.1, 0.25, 1.0, 0.2],
                [0.3, 0.15, 0.2, 1.0]]
    return {"kind": "norta", "additive": True, "spearman": spearman, "marginals": [
        {"family": "normal", "mean": 0.0, "sd": 0.2},
        {"family": "exponential", "rate": 5.0},
        {"family": "chi_square", "k": 2.0, "scale": 0.1},
        {"family": "lognormal", "mu": math.log(0.1), "sigma": 0.5},
    ]}


def export_iris(args):
    datasets = _require("sklearn", "pip install scikit-learn").datasets
    from sklearn.model_selection import train_test_split
    from sklearn.tree import DecisionTreeClassifier

    iris = datasets.load_iris()
    x_train, x_test, y_train, y_test = train_test_split(
        iris.data, iris.target, test_size=0.1, random_state=args.split_seed, stratify=iris.target)
    manifest = {"dataset": "iris", "split": "90/10 stratified", "split_seed": args.split_seed,
                "kind": args.kind, "max_depth": args.depth, "preprocessing": "none"}
    if args.kind == "boosted":
        xgb = _require("xgboost", "pip install xgboost")
        model = xgb.XGBClassifier(n_estimators=args.rounds, max_depth=args.depth, tree_method="exact",
                                  learning_rate=0.3, random_state=args.split_seed)
        model.fit(x_train, y_train)
        doc = export_xgboost(model.get_booster(), 4, 3)
        reference = model.predict(x_test)
        manifest["boosting_rounds"] = args.rounds
        uncertainty = norta_iris_uncertainty()
    else:
        if args.kind == "random_forest":
            from sklearn.ensemble import RandomForestClassifier
            model = RandomForestClassifier(n_estimators=args.trees, max_depth=args.depth,
                                           random_state=args.split_seed)
        else:
            model = DecisionTreeClassifier(max_depth=args.depth, random_state=args.split_seed)
        model.fit(x_train, y_train)
        doc = export_sklearn(model, 4, 3)
        reference = sklearn_reference(model, x_test)
        uncertainty = mvn_uncertainty(4, args.variance)
    manifest["test_accuracy"] = float(np.mean(reference == y_test))
    write_bundle(args.out, doc, x_test, reference, uncertainty, manifest)


def load_mnist_csv(path):
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rt") as f:
        data = np.loadtxt(f, delimiter=",")
    return data[:, :-1].reshape(-1, 28, 28), data[:, -1].astype(int)


def resize_images(images, size):
    from PIL import Image

    out = np.empty((len(images), size * size))
    for i, img in enumerate(images):
        small = Image.fromarray(img.astype(np.float32), mode="F").resize((size, size), Image.BOX)
        out[i] = np.clip(np.asarray(small, dtype=np.float64) / 255.0, 0.0, 1.0).reshape(-1)
    return out


def export_mnist(args):
    _require("sklearn", "pip install scikit-learn")
    from sklearn.ensemble import RandomForestClassifier
    from sklearn.tree import DecisionTreeClassifier

    if not 3 <= args.resize <= 10:
        sys.exit("error: --resize must lie in 3..10")
    if not os.path.exists(args.csv):
        sys.exit(f"error: MNIST CSV not found at {args.csv} (784 pixel columns + label per row)")
    images, labels = load_mnist_csv(args.csv)
    x = resize_images(images, args.resize)
    n_train = int(len(x) * args.train_fraction)
    x_train, y_train, x_test = x[:n_train], labels[:n_train], x[n_train:n_train + args.n_test]
    if args.kind == "random_forest":
        model = RandomForestClassifier(n_estimators=args.trees, max_depth=args.depth, random_state=args.seed)
    else:
        model = DecisionTreeClassifier(max_depth=args.depth, random_state=args.seed)
    model.fit(x_train, y_train)
    doc = export_sklearn(model, x.shape[1], 10)
    reference = sklearn_reference(model, x_test)
    manifest = {"dataset": os.path.basename(args.csv), "resize": f"{args.resize}x{args.resize}",
                "preprocessing": "box-filter resize, divide by 255, row-major flatten",
                "train_rows": n_train, "test_rows": f"first {args.n_test} rows after the training rows",
                "kind": args.kind, "max_depth": args.depth, "seed": args.seed}
    if args.kind == "random_forest":
        manifest["n_trees"] = args.trees
        manifest["library_predict_mismatches"] = int(np.sum(model.predict(x_test) != reference))
    write_bundle(args.out, doc, x_test, reference, mvn_uncertainty(x.shape[1], args.variance), manifest)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    iris = sub.add_parser("export-iris")
    iris.add_argument("--kind", choices=["decision_tree", "random_forest", "boosted"], default="decision_tree")
    iris.add_argument("--depth", type=int, default=4)
    iris.add_argument("--trees", type=int, default=5)
    iris.add_argument("--rounds", type=int, default=6, help="boosting rounds (one tree per class each)")
    iris.add_argument("--split-seed", type=int, default=0)
    iris.add_argument("--variance", type=float, default=0.1)
    iris.add_argument("--out", required=True)

    mnist = sub.add_parser("export-mnist")
    mnist.add_argument("--csv", required=True)
    mnist.add_argument("--resize", type=int, default=5)
    mnist.add_argument("--kind", choices=["decision_tree", "random_forest"], default="random_forest")
    mnist.add_argument("--depth", type=int, default=3)
    mnist.add_argument("--trees", type=int, default=5)
    mnist.add_argument("--train-fraction", type=float, default=0.8)
    mnist.add_argument("--n-test", type=int, default=10)
    mnist.add_argument("--seed", type=int, default=0)
    mnist.add_argument("--variance", type=float, default=0.001)
    mnist.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.depth < 1:
        parser.error("--depth must be >= 1")
    (export_iris if args.command == "export-iris" else export_mnist)(args)


if __name__ == "__main__":
    main()
