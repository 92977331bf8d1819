import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

from speaker_fusion._archive import atomic_write_text, check_config_hash
from speaker_fusion._exceptions import ArchiveError
from speaker_fusion._models._naive_bayes import NbModel, nb_from_json, nb_to_json
from speaker_fusion._models._svm import OvoSvmModel, ovo_from_json, ovo_to_json

CLASSIFIER_DOCUMENT_VERSION = 1

Classifier = Union[OvoSvmModel, NbModel]


def classifier_to_json(model: Classifier, config_hash: Optional[str] = None) -> Dict[str, Any]:
    """
    Render a trained classifier as a versioned JSON document

    Args:
        model: One-vs-one SVM or Naive Bayes model
        config_hash: Hash of the configuration the model was trained with

    Returns:
        Dict[str, Any]: {version, kind, classes, scaler, machines | nb_params, config_hash}
    """
    if isinstance(model, OvoSvmModel):
        document = {"kind": "svm", **ovo_to_json(model)}
    elif isinstance(model, NbModel):
        document = {"kind": "nb", "scaler": None, **nb_to_json(model)}
    else:
        raise TypeError(f"Unsupported classifier type: {type(model).__name__}")
    document["version"] = CLASSIFIER_DOCUMENT_VERSION
    document["config_hash"] = config_hash
    return document


def classifier_from_json(document: Dict[str, Any]) -> Classifier:
    if not isinstance(document, dict) or document.get("version") != CLASSIFIER_DOCUMENT_VERSION:
        raise ArchiveError("unsupported classifier document version")
    kind = document.get("kind")
    if kind == "svm":
        return ovo_from_json(document)
    if kind == "nb":
        return nb_from_json(document)
    raise ArchiveError(f"unknown classifier kind {kind!r}")


def save_classifier(
    path: Union[str, Path], model: Classifier, config_hash: Optional[str] = None
) -> None:
    atomic_write_text(path, json.dumps(classifier_to_json(model, config_hash)))


def load_classifier(
    path: Union[str, Path], expected_config_hash: Optional[str] = None
) -> Classifier:
    """
    Load a classifier document, optionally requiring the configuration hash it was trained under

    Raises:
        ArchiveError: On unreadable documents
        ConfigHashMismatchError: When `expected_config_hash` is given and differs
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise ArchiveError("classifier document not found", str(path)) from e
    except json.JSONDecodeError as e:
        raise ArchiveError(f"classifier document is not valid JSON: {e}", str(path)) from e
    model = classifier_from_json(document)
    check_config_hash(document.get("config_hash"), expected_config_hash, "classifier", str(path))
    return model
