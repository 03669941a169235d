"""Training and packaging of the validity classifier.

The default encoder hashes character n-grams of the rendered pair and fits
a logistic model with minibatch SGD, honoring the configured epochs, batch
size, and learning rate. A transformer encoder identifier is accepted by
the config contract but needs downloadable pretrained weights; in an
offline deployment that path raises immediately rather than degrading.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

import joblib
import numpy as np
from sklearn.feature_extraction.text import HashingVectorizer
from sklearn.linear_model import SGDClassifier

from .data import (
    TrainingExample,
    load_examples,
    load_template_patterns,
    render_pair,
)


class TrainerError(Exception):
    pass


@dataclass
class TrainerConfig:
    training_path: str
    encoder_model: str | None = None  # None -> hashed char n-grams
    epochs: int = 6
    batch_size: int = 32
    learning_rate: float = 0.5
    eval_split: float = 0.2
    serve_port: int = 8732
    seed: int = 0
    templates_path: str | None = None
    artifact_path: str = "filter_model.joblib"

    def __post_init__(self) -> None:
        if not 0.0 < self.eval_split < 1.0:
            raise TrainerError("eval_split must be in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainerError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise TrainerError("learning_rate must be positive")

    @classmethod
    def load(cls, path: str | Path) -> "TrainerConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise TrainerError(f"cannot read config {path}: {exc}") from None
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise TrainerError(f"unknown config keys: {sorted(unknown)}")
        if "training_path" not in data:
            raise TrainerError("config needs training_path")
        return cls(**data)


@dataclass
class EvalReport:
    held_out_accuracy: float
    mean_score_valid: float
    mean_score_invalid: float
    mean_score_by_negative_type: dict[str, float]
    n_train: int
    n_eval: int

    @property
    def score_gap(self) -> float:
        return self.mean_score_valid - self.mean_score_invalid

    def record(self) -> dict:
        return {
            "held_out_accuracy": self.held_out_accuracy,
            "mean_score_valid": self.mean_score_valid,
            "mean_score_invalid": self.mean_score_invalid,
            "score_gap": self.score_gap,
            "mean_score_by_negative_type": self.mean_score_by_negative_type,
            "n_train": self.n_train,
            "n_eval": self.n_eval,
        }


class FilterModel:
    """Rendered-pair text -> validity probability."""

    def __init__(self, vectorizer: HashingVectorizer, classifier: SGDClassifier,
                 patterns: dict[str, str]):
        self.vectorizer = vectorizer
        self.classifier = classifier
        self.patterns = patterns

    def score(self, items: list[tuple[str, str, str]]) -> list[float]:
        if not items:
            return []
        texts = [render_pair(self.patterns, h, r, t) for h, r, t in items]
        features = self.vectorizer.transform(texts)
        valid_column = list(self.classifier.classes_).index(1)
        probabilities = self.classifier.predict_proba(features)[:, valid_column]
        return [float(min(max(p, 0.0), 1.0)) for p in probabilities]

    def save(self, path: str | Path) -> str:
        joblib.dump({"vectorizer": self.vectorizer, "classifier": self.classifier,
                     "patterns": self.patterns}, path)
        return artifact_hash(path)

    @classmethod
    def load(cls, path: str | Path) -> "FilterModel":
        try:
            payload = joblib.load(path)
            return cls(payload["vectorizer"], payload["classifier"], payload["patterns"])
        except (OSError, KeyError, ValueError) as exc:
            raise TrainerError(f"cannot load model artifact {path}: {exc}") from None


def artifact_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _split(examples: list[TrainingExample], fraction: float, seed: int):
    rng = random.Random(seed)
    shuffled = list(examples)
    rng.shuffle(shuffled)
    n_eval = max(1, int(len(shuffled) * fraction))
    return shuffled[n_eval:], shuffled[:n_eval]


def train(config: TrainerConfig) -> tuple[FilterModel, EvalReport]:
    if config.encoder_model is not None:
        raise TrainerError(
            f"encoder_model={config.encoder_model!r}: transformer encoders need "
            "downloadable pretrained weights; this deployment supports only the "
            "built-in hashed n-gram encoder (encoder_model: null)"
        )
    examples = load_examples(config.training_path)
    labels_present = {ex.label for ex in examples}
    if labels_present != {"valid", "invalid"}:
        raise TrainerError(
            f"training file must contain both labels, found {sorted(labels_present)}")
    patterns = load_template_patterns(config.templates_path)

    train_examples, eval_examples = _split(examples, config.eval_split, config.seed)
    if not {ex.label for ex in train_examples} == {"valid", "invalid"}:
        raise TrainerError("train split lost a label class; lower eval_split")

    vectorizer = HashingVectorizer(
        analyzer="char", ngram_range=(1, 3), n_features=2 ** 16, alternate_sign=False)
    classifier = SGDClassifier(
        loss="log_loss", learning_rate="constant", eta0=config.learning_rate,
        alpha=1e-6, random_state=config.seed)

    def encode(batch: list[TrainingExample]):
        texts = [render_pair(patterns, ex.head, ex.relation, ex.tail) for ex in batch]
        y = np.array([1 if ex.label == "valid" else 0 for ex in batch])
        return vectorizer.transform(texts), y

    rng = random.Random(config.seed + 1)
    order = list(train_examples)
    for _ in range(config.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            features, y = encode(batch)
            classifier.partial_fit(features, y, classes=np.array([0, 1]))

    model = FilterModel(vectorizer, classifier, patterns)

    eval_items = [(ex.head, ex.relation, ex.tail) for ex in eval_examples]
    scores = model.score(eval_items)
    predictions = [1 if s >= 0.5 else 0 for s in scores]
    truth = [1 if ex.label == "valid" else 0 for ex in eval_examples]
    accuracy = sum(1 for p, t in zip(predictions, truth) if p == t) / len(eval_examples)

    def mean_of(selector) -> float:
        selected = [s for s, ex in zip(scores, eval_examples) if selector(ex)]
        return sum(selected) / len(selected) if selected else float("nan")

    by_type: dict[str, float] = {}
    for negative_type in sorted({ex.negative_type for ex in eval_examples if ex.negative_type}):
        by_type[negative_type] = mean_of(lambda ex: ex.negative_type == negative_type)

    report = EvalReport(
        held_out_accuracy=accuracy,
        mean_score_valid=mean_of(lambda ex: ex.label == "valid"),
        mean_score_invalid=mean_of(lambda ex: ex.label == "invalid"),
        mean_score_by_negative_type=by_type,
        n_train=len(train_examples),
        n_eval=len(eval_examples),
    )
    return model, report
