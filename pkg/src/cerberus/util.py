"""Small shared helpers: seeding, canonical JSON, cosine similarity."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def canonical_json(obj) -> str:
    """Serialize to a canonical, byte-stable JSON string."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj) -> str:
    """sha256 hex digest of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def derive_seed(master_seed: int, stage: str) -> int:
    """Deterministic per-stage seed derived from a single master seed.

    All randomness in the pipeline funnels through one top-level seed; each
    stage (and each repetition within a stage) gets its own stream via
    ``derive_seed(seed, "stage-name")``.
    """
    digest = hashlib.sha256(f"{master_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; raises on zero-norm input so callers can decide."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroDivisionError("cosine of zero-norm vector")
    return float(np.dot(a, b) / (na * nb))
