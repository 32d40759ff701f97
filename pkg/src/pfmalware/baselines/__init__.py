from .forest import ForestClassifier, ForestModel, Tree, build_tree, forest_predict_proba, train_forest
from .grid import DEFAULT_GRIDS, GridSearchResult, expand_grid, grid_search
from .logreg import LogisticRegressionClassifier, LogRegModel, logreg_predict_proba, train_logreg
from .pipelines import BASELINES, load_baseline, make_baseline, save_baseline
from .svd import TruncatedSVDTransformer, project, truncated_svd
from .text import SEPARATOR, NgramTfidfVectorizer, TfidfModel, fit_tfidf, ngrams, transform_tfidf

__all__ = [
    "BASELINES", "DEFAULT_GRIDS", "GridSearchResult", "SEPARATOR", "expand_grid", "grid_search", "ForestClassifier", "ForestModel", "LogRegModel",
    "LogisticRegressionClassifier", "NgramTfidfVectorizer", "TfidfModel", "Tree",
    "TruncatedSVDTransformer", "build_tree", "fit_tfidf", "forest_predict_proba", "load_baseline",
    "logreg_predict_proba", "make_baseline", "ngrams", "project", "save_baseline", "train_forest",
    "train_logreg", "transform_tfidf", "truncated_svd",
]
