"""Self-describing JSON model documents with a model-kind discriminator."""

from __future__ import annotations

import json
from pathlib import Path

from .baselines import LogisticRegressionClassifier, SingleTaskKernelClassifier
from .errors import SchemaError
from .mtmkl import MtMklClassifier

_REGISTRY = {
    cls.model_kind: cls
    for cls in (MtMklClassifier, LogisticRegressionClassifier, SingleTaskKernelClassifier)
}


def model_to_json(estimator) -> str:
    return json.dumps(estimator.to_doc(), indent=2, sort_keys=True)


def save_model(estimator, path: str | Path) -> None:
    Path(path).write_text(model_to_json(estimator), encoding="utf-8")


def load_model(path: str | Path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: cannot read model document: {exc}") from exc
    kind = doc.get("model_kind")
    if kind not in _REGISTRY:
        raise SchemaError(f"{path}: unknown model_kind {kind!r}; expected one of {sorted(_REGISTRY)}")
    from .features import FEATURE_NAMES

    names = doc.get("feature_names")
    if names is not None and tuple(names) != FEATURE_NAMES:
        raise SchemaError(f"{path}: model feature header does not match this build")
    return _REGISTRY[kind].from_doc(doc)
