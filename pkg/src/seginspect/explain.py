"""Shared explanation result type and method registry."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .imaging import SaliencyMap
from .models import ModelDescriptor


@dataclass(frozen=True)
class ExplainResult:
    """A saliency map plus the provenance needed to reproduce it."""

    saliency: SaliencyMap
    method: str
    config_digest: str
    model: ModelDescriptor
    seed: int

    def __post_init__(self) -> None:
        if not self.method:
            raise ValueError("method name must be nonempty")
        if not self.config_digest:
            raise ValueError("config digest must be nonempty")


def config_digest(payload: dict) -> str:
    """Stable digest of a JSON-serializable config mapping."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]
