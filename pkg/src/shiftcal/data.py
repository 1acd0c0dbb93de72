"""Record and dataset types, JSON Lines ingestion and validation."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._validation import SIMPLEX_ATOL, as_targets


class Role(str, enum.Enum):
    ID_CALIB = "id_calib"
    ID_TEST = "id_test"
    SHIFTED_TEST = "shifted_test"
    OOD_POOL = "ood_pool"

    @classmethod
    def parse(cls, value) -> "Role":
        if isinstance(value, Role):
            return value
        key = str(value).strip()
        for role in cls:
            if key.lower() == role.value or key.upper() == role.name:
                return role
        raise ValueError(f"unknown split role {value!r}")


class InvalidSetError(ValueError):
    """Raised when an EvalSet violates one or more of its invariants.

    ``problems`` holds one message per violation.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Record:
    logits: tuple
    label: Optional[int] = None
    embedding: Optional[tuple] = None


@dataclass(frozen=True)
class EvalSet:
    """An immutable, role-tagged collection of records sharing one class count."""

    records: tuple
    role: Role
    class_count: int
    name: str = "unnamed"

    def __len__(self):
        return len(self.records)

    @cached_property
    def logits(self) -> np.ndarray:
        return np.array([r.logits for r in self.records], dtype=np.float64).reshape(len(self.records), -1)

    @cached_property
    def labels(self) -> Optional[np.ndarray]:
        if self.role is Role.OOD_POOL:
            return None
        return np.array([r.label for r in self.records], dtype=np.int64)

    @cached_property
    def embeddings(self) -> Optional[np.ndarray]:
        if not self.records or any(r.embedding is None for r in self.records):
            return None
        return np.array([r.embedding for r in self.records], dtype=np.float64)

    @classmethod
    def from_arrays(cls, logits, labels=None, role=Role.ID_TEST, name="unnamed", embeddings=None) -> "EvalSet":
        role = Role.parse(role)
        z = np.asarray(logits, dtype=np.float64)
        if z.ndim != 2:
            raise ValueError(f"logits must be 2-D, got shape {z.shape}")
        emb = None if embeddings is None else np.asarray(embeddings, dtype=np.float64)
        records = []
        for i in range(z.shape[0]):
            records.append(Record(
                logits=tuple(float(v) for v in z[i]),
                label=None if labels is None else int(labels[i]),
                embedding=None if emb is None else tuple(float(v) for v in emb[i]),
            ))
        out = cls(tuple(records), role, int(z.shape[1]), name)
        validate_set(out)
        return out


@dataclass(frozen=True)
class SoftLabelSet:
    targets: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError("soft labels must be a 2-D matrix")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > SIMPLEX_ATOL):
            raise ValueError("every soft-label row must lie in the probability simplex")
        object.__setattr__(self, "targets", t)


@dataclass(frozen=True)
class CalibSet:
    """Calibration inputs: logits, target rows, origin flags, optional embeddings.

    Targets are always stored as an ``(N, C)`` matrix; hard labels become
    one-hot rows. OOD rows carry either uniform or all-zero targets.
    """

    logits: np.ndarray
    targets: np.ndarray
    is_ood: Optional[np.ndarray] = None
    embeddings: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.logits, dtype=np.float64)
        n, c = z.shape
        t = as_targets(self.targets, n, c)
        ood = np.zeros(n, dtype=bool) if self.is_ood is None else np.asarray(self.is_ood, dtype=bool)
        if ood.shape != (n,):
            raise ValueError("origin flags must have one entry per row")
        if ood.all():
            raise ValueError("calibration set needs at least one ID row")
        emb = self.embeddings
        if emb is not None:
            emb = np.asarray(emb, dtype=np.float64)
            if emb.shape[0] != n:
                raise ValueError("embeddings must have one row per logit row")
        object.__setattr__(self, "logits", z)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "is_ood", ood)
        object.__setattr__(self, "embeddings", emb)

    def __len__(self):
        return self.logits.shape[0]

    @property
    def class_count(self):
        return self.logits.shape[1]

    @classmethod
    def from_evalset(cls, eval_set: EvalSet) -> "CalibSet":
        if eval_set.role is Role.OOD_POOL:
            raise ValueError("an OOD pool alone cannot form a calibration set")
        return cls(eval_set.logits, eval_set.labels, np.zeros(len(eval_set), dtype=bool), eval_set.embeddings)

    def id_part(self) -> "CalibSet":
        keep = ~self.is_ood
        emb = None if self.embeddings is None else self.embeddings[keep]
        return CalibSet(self.logits[keep], self.targets[keep], self.is_ood[keep], emb)


def _parse_vector(value, what, lineno):
    if not isinstance(value, list) or not value:
        raise ValueError(f"line {lineno}: {what} must be a non-empty list of numbers")
    try:
        vec = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ValueError(f"line {lineno}: {what} must contain only numbers") from None
    if not all(math.isfinite(v) for v in vec):
        raise ValueError(f"line {lineno}: non-finite value in {what}")
    return vec


def load_records(path, role) -> EvalSet:
    """Read a JSON Lines record file into a validated :class:`EvalSet`.

    Blank lines are skipped. The class count is taken from the first record.
    """
    role = Role.parse(role)
    path = Path(path)
    records = []
    class_count = None
    emb_dim = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: parse error: {exc.msg}") from None
            if not isinstance(obj, dict) or "logits" not in obj:
                raise ValueError(f"line {lineno}: parse error: expected an object with a 'logits' field")
            logits = _parse_vector(obj["logits"], "logits", lineno)
            if class_count is None:
                class_count = len(logits)
            elif len(logits) != class_count:
                raise ValueError(f"inconsistent class count at line {lineno}")
            label = obj.get("label")
            if role is Role.OOD_POOL:
                if label is not None:
                    raise ValueError(f"line {lineno}: label not allowed for OOD_POOL")
            else:
                if label is None:
                    raise ValueError(f"line {lineno}: label required for {role.name}")
                if isinstance(label, bool) or not isinstance(label, int):
                    raise ValueError(f"line {lineno}: label must be an integer")
                if not 0 <= label < class_count:
                    raise ValueError(f"line {lineno}: label {label} out of range for {class_count} classes")
            embedding = obj.get("embedding")
            if embedding is not None:
                embedding = _parse_vector(embedding, "embedding", lineno)
                if emb_dim is None:
                    emb_dim = len(embedding)
                elif len(embedding) != emb_dim:
                    raise ValueError(f"inconsistent embedding length at line {lineno}")
            records.append(Record(logits, label, embedding))
    if not records:
        raise InvalidSetError(["empty set"])
    out = EvalSet(tuple(records), role, class_count, path.stem)
    validate_set(out)
    return out


def save_records(eval_set: EvalSet, path) -> None:
    """Write records as JSON Lines. Floats use the shortest repr that round-trips."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in eval_set.records:
            obj = {"logits": list(rec.logits)}
            if rec.label is not None:
                obj["label"] = rec.label
            if rec.embedding is not None:
                obj["embedding"] = list(rec.embedding)
            fh.write(json.dumps(obj) + "\n")


def validate_set(eval_set: EvalSet) -> None:
    problems = []
    if not eval_set.records:
        raise InvalidSetError(["empty set"])
    c = eval_set.class_count
    if c < 2:
        problems.append(f"class count must be >= 2, got {c}")
    emb_dim = None
    for i, rec in enumerate(eval_set.records):
        if len(rec.logits) != c:
            problems.append(f"record {i}: logits length {len(rec.logits)} != class count {c}")
        elif not all(math.isfinite(v) for v in rec.logits):
            problems.append(f"record {i}: non-finite logit")
        if eval_set.role is Role.OOD_POOL:
            if rec.label is not None:
                problems.append(f"record {i}: label not allowed for OOD_POOL")
        elif rec.label is None:
            problems.append(f"record {i}: missing label for {eval_set.role.name}")
        elif not 0 <= rec.label < c:
            problems.append(f"record {i}: label {rec.label} out of range")
        if rec.embedding is not None:
            if emb_dim is None:
                emb_dim = len(rec.embedding)
            if len(rec.embedding) != emb_dim:
                problems.append(f"record {i}: inconsistent embedding length")
            elif not all(math.isfinite(v) for v in rec.embedding):
                problems.append(f"record {i}: non-finite embedding value")
    if problems:
        raise InvalidSetError(problems)


def subsample(eval_set: EvalSet, n: int, seed: int) -> EvalSet:
    """Draw ``n`` records uniformly without replacement, deterministically per seed."""
    total = len(eval_set)
    if not 1 <= n <= total:
        raise ValueError(f"n must lie in [1, {total}], got {n}")
    idx = np.random.default_rng(seed).choice(total, size=n, replace=False)
    records = tuple(eval_set.records[i] for i in idx)
    return EvalSet(records, eval_set.role, eval_set.class_count, eval_set.name)


def concat_sets(sets: Sequence[EvalSet], name=None) -> EvalSet:
    if not sets:
        raise ValueError("nothing to concatenate")
    first = sets[0]
    for s in sets[1:]:
        if s.class_count != first.class_count or s.role is not first.role:
            raise ValueError("can only concatenate sets with equal class count and role")
    records = tuple(r for s in sets for r in s.records)
    return EvalSet(records, first.role, first.class_count, name or first.name)
