"""The four baseline pipelines and their on-disk format."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.pipeline import Pipeline

from .. import container
from ..exceptions import BadConfig, ShapeMismatch
from .forest import ForestClassifier, ForestModel, Tree
from .logreg import LogisticRegressionClassifier, LogRegModel
from .svd import TruncatedSVDTransformer
from .text import NgramTfidfVectorizer, TfidfModel

MAGIC = b"PFB1"
MODEL_FILE = "model.pfb"
BASELINES = ("lr2", "lr3", "rf2", "rf3")


def make_baseline(name: str, random_state: int = 0, **params) -> Pipeline:
    """``lr<n>``: n-gram TF-IDF -> logistic regression.
    ``rf<n>``: n-gram TF-IDF -> truncated SVD -> random forest.

    ``params`` use pipeline names, e.g. ``clf__l2_strength=0.1`` or
    ``svd__n_components=50``.
    """
    if name not in BASELINES:
        raise BadConfig(f"unknown baseline {name!r}; choose from {', '.join(BASELINES)}")
    n = int(name[2])
    if name.startswith("lr"):
        steps = [("tfidf", NgramTfidfVectorizer(n)), ("clf", LogisticRegressionClassifier())]
    else:
        steps = [("tfidf", NgramTfidfVectorizer(n)),
                 ("svd", TruncatedSVDTransformer(random_state=random_state)),
                 ("clf", ForestClassifier(random_state=random_state))]
    return Pipeline(steps).set_params(**params)


def _kind(pipeline: Pipeline) -> str:
    n = pipeline.named_steps["tfidf"].n
    return ("rf" if "svd" in pipeline.named_steps else "lr") + str(n)


def save_baseline(pipeline: Pipeline, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    steps = pipeline.named_steps
    tfidf = steps["tfidf"].tfidf_
    clf = steps["clf"]
    terms = sorted(tfidf.ngram_to_index, key=tfidf.ngram_to_index.get)
    config = {
        "model": _kind(pipeline),
        "params": json.dumps({name: est.get_params(deep=False) for name, est in pipeline.steps},
                             sort_keys=True),
        "classes": json.dumps(clf.classes_.tolist()),
        "tfidf.ngrams": json.dumps(terms),
        "tfidf.n_documents": tfidf.n_documents,
    }
    blocks = {"tfidf.df": tfidf.document_frequency}
    if "svd" in steps:
        blocks["svd.components"] = steps["svd"].components_
    if isinstance(clf, LogisticRegressionClassifier):
        config["logreg.iterations"] = clf.n_iter_
        blocks["logreg.weights"] = clf.model_.weights
        blocks["logreg.bias"] = clf.model_.bias
    else:
        forest = clf.model_
        config["forest.n_classes"] = forest.n_classes
        config["forest.features_per_split"] = forest.features_per_split
        config["forest.oob_score"] = repr(clf.oob_score_)
        trees = forest.trees
        blocks["forest.node_counts"] = np.array([t.n_nodes for t in trees])
        for field in ("feature", "threshold", "left", "right"):
            blocks[f"forest.{field}"] = np.concatenate([getattr(t, field) for t in trees])
        blocks["forest.value"] = np.concatenate([t.value for t in trees])
    container.write(d / MODEL_FILE, MAGIC, config, blocks)
    return d


def load_baseline(directory) -> Pipeline:
    config, blocks = container.read(Path(directory) / MODEL_FILE, MAGIC)
    params = json.loads(config["params"])
    pipeline = make_baseline(config["model"])
    for name, est in pipeline.steps:
        est.set_params(**params[name])

    steps = pipeline.named_steps
    terms = json.loads(config["tfidf.ngrams"])
    df = blocks["tfidf.df"].astype(np.float64)
    if df.shape != (len(terms),):
        raise ShapeMismatch(f"tfidf.df has shape {df.shape}, expected ({len(terms)},)")
    steps["tfidf"].tfidf_ = TfidfModel({t: i for i, t in enumerate(terms)}, df,
                                       int(config["tfidf.n_documents"]))
    classes = np.array(json.loads(config["classes"]))
    C = len(classes)
    if "svd" in steps:
        comps = blocks["svd.components"]
        if comps.ndim != 2 or comps.shape[0] != len(terms):
            raise ShapeMismatch(f"svd.components has shape {comps.shape}")
        steps["svd"].components_ = comps
    clf = steps["clf"]
    clf.classes_ = classes
    if isinstance(clf, LogisticRegressionClassifier):
        D = len(terms)
        container.check_shapes(blocks, {"logreg.weights": (D, C), "logreg.bias": (C,)})
        clf.model_ = LogRegModel(blocks["logreg.weights"], blocks["logreg.bias"], clf.l2_strength,
                                 int(config["logreg.iterations"]))
        clf.n_iter_ = clf.model_.iterations
    else:
        counts = blocks["forest.node_counts"].astype(np.intp)
        bounds = np.concatenate([[0], np.cumsum(counts)])
        total = int(bounds[-1])
        container.check_shapes(blocks, {"forest.feature": (total,), "forest.threshold": (total,),
                                        "forest.left": (total,), "forest.right": (total,),
                                        "forest.value": (total, C)})
        trees = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            trees.append(Tree(blocks["forest.feature"][a:b].astype(np.intp),
                              blocks["forest.threshold"][a:b],
                              blocks["forest.left"][a:b].astype(np.intp),
                              blocks["forest.right"][a:b].astype(np.intp),
                              blocks["forest.value"][a:b]))
        clf.model_ = ForestModel(trees, int(config["forest.n_classes"]),
                                 int(config["forest.features_per_split"]))
        clf.oob_score_ = float(config["forest.oob_score"])
    return pipeline
