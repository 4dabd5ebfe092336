"""Data model for instances, locales, and corpora, plus JSONL file I/O.

An instance is one classification unit: a bag of global feature ids, a bag
of local feature ids, and an optional gold class label. A locale is an
ordered group of instances whose local features share one latent
regularity (for example one page, or one site). Bags allow repeated ids;
singleton bags recover the one-feature-per-node model.

The on-disk format is UTF-8 JSON lines: a header object carrying the
dimensions ``K`` (classes), ``V`` (global vocabulary, including the
reserved out-of-vocabulary id ``V - 1`` when built from raw strings) and
``F`` (local vocabulary), followed by one locale object per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "CorpusError",
    "DimensionMismatch",
    "Dims",
    "Instance",
    "Locale",
    "Corpus",
    "OOV_NAME",
    "apply_index",
    "build_index",
    "feature_counts",
    "load_corpus",
    "save_corpus",
    "validate",
]

OOV_NAME = "<oov>"


class CorpusError(Exception):
    """Malformed corpus data: bad file contents or violated preconditions."""


class DimensionMismatch(Exception):
    """Ids or model shapes that disagree with a corpus's declared dims."""


class Dims(NamedTuple):
    K: int  # class count
    V: int  # global vocabulary size
    F: int  # local vocabulary size


@dataclass(frozen=True)
class Instance:
    global_feats: tuple[int, ...]
    local_feats: tuple[int, ...]
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "global_feats", tuple(int(g) for g in self.global_feats))
        object.__setattr__(self, "local_feats", tuple(int(f) for f in self.local_feats))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class Locale:
    id: str
    instances: tuple[Instance, ...]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self) -> int:
        return len(self.instances)


@dataclass(frozen=True)
class Corpus:
    locales: tuple[Locale, ...]
    dims: Dims
    class_names: Optional[tuple[str, ...]] = None
    global_names: Optional[tuple[str, ...]] = None
    local_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "locales", tuple(self.locales))
        object.__setattr__(self, "dims", Dims(*self.dims))
        for name in ("class_names", "global_names", "local_names"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(val))

    def instance_count(self) -> int:
        return sum(len(loc) for loc in self.locales)


def validate(corpus: Corpus) -> list[str]:
    """Return every invariant violation with its location (empty means ok)."""
    violations = []
    K, V, F = corpus.dims
    if K < 1 or V < 1 or F < 1:
        violations.append(f"dims must be positive, got K={K} V={V} F={F}")
    if not corpus.locales:
        violations.append("corpus has no locales")
    seen_ids = set()
    for loc in corpus.locales:
        if loc.id in seen_ids:
            violations.append(f"duplicate locale id {loc.id!r}")
        seen_ids.add(loc.id)
        if not loc.instances:
            violations.append(f"locale {loc.id!r} has no instances")
        for idx, inst in enumerate(loc.instances):
            where = f"locale {loc.id!r} instance {idx}"
            if not inst.global_feats:
                violations.append(f"{where}: empty global feature bag")
            for g in inst.global_feats:
                if not 0 <= g < V:
                    violations.append(f"{where}: global feature id {g} outside [0, {V})")
            for f in inst.local_feats:
                if not 0 <= f < F:
                    violations.append(f"{where}: local feature id {f} outside [0, {F})")
            if inst.label is not None and not 0 <= inst.label < K:
                violations.append(f"{where}: label {inst.label} outside [0, {K})")
    return violations


def build_index(
    raw_locales: Sequence[tuple[str, Sequence[tuple[Sequence[str], Sequence[str], Optional[str]]]]],
    class_names: Optional[Sequence[str]] = None,
) -> Corpus:
    """Index a string-valued raw corpus into a dense-id :class:`Corpus`.

    ``raw_locales`` is a sequence of ``(locale_id, instances)`` pairs where
    each raw instance is ``(global_strings, local_strings, label_or_None)``.
    Ids are assigned in first-occurrence order, so indexing is
    deterministic, and a reserved out-of-vocabulary global id is appended
    at index ``V - 1`` for mapping unseen strings later.
    """
    if not raw_locales:
        raise CorpusError("cannot index an empty corpus")
    global_ids: dict[str, int] = {}
    local_ids: dict[str, int] = {}
    class_ids: dict[str, int] = {}
    if class_names is not None:
        class_ids = {name: i for i, name in enumerate(class_names)}
    locales = []
    for loc_id, raw_instances in raw_locales:
        if not raw_instances:
            raise CorpusError(f"locale {loc_id!r} has no instances")
        instances = []
        for g_strs, l_strs, label in raw_instances:
            g = tuple(global_ids.setdefault(s, len(global_ids)) for s in g_strs)
            l = tuple(local_ids.setdefault(s, len(local_ids)) for s in l_strs)
            y = None
            if label is not None:
                if class_names is not None and label not in class_ids:
                    raise CorpusError(f"label {label!r} not in supplied class names")
                y = class_ids.setdefault(label, len(class_ids))
            instances.append(Instance(g, l, y))
        locales.append(Locale(str(loc_id), tuple(instances)))
    if not class_ids:
        raise CorpusError("no labels present and no class names supplied")
    dims = Dims(len(class_ids), len(global_ids) + 1, max(len(local_ids), 1))
    return Corpus(
        locales=tuple(locales),
        dims=dims,
        class_names=tuple(class_ids),
        global_names=tuple(global_ids) + (OOV_NAME,),
        local_names=tuple(local_ids) if local_ids else None,
    )


def apply_index(reference: Corpus, raw_locales) -> Corpus:
    """Index raw string-valued data through an existing corpus's dictionaries.

    Global strings unseen at indexing time map to the reserved
    out-of-vocabulary id ``V - 1``; an unseen local string or class label
    has no reserved home and is an error. This is how test-time data joins
    the id space of the corpus a model was trained on.
    """
    if reference.global_names is None or reference.class_names is None:
        raise CorpusError("reference corpus carries no name dictionaries")
    if not raw_locales:
        raise CorpusError("cannot index an empty corpus")
    global_ids = {name: i for i, name in enumerate(reference.global_names[:-1])}
    local_ids = {name: i for i, name in enumerate(reference.local_names or ())}
    class_ids = {name: i for i, name in enumerate(reference.class_names)}
    oov = reference.dims.V - 1
    locales = []
    for loc_id, raw_instances in raw_locales:
        if not raw_instances:
            raise CorpusError(f"locale {loc_id!r} has no instances")
        instances = []
        for g_strs, l_strs, label in raw_instances:
            g = tuple(global_ids.get(s, oov) for s in g_strs)
            unknown = [s for s in l_strs if s not in local_ids]
            if unknown:
                raise CorpusError(
                    f"locale {loc_id!r}: local values {unknown!r} not in the reference vocabulary"
                )
            l = tuple(local_ids[s] for s in l_strs)
            y = None
            if label is not None:
                if label not in class_ids:
                    raise CorpusError(f"locale {loc_id!r}: unknown class label {label!r}")
                y = class_ids[label]
            instances.append(Instance(g, l, y))
        locales.append(Locale(str(loc_id), tuple(instances)))
    return Corpus(
        locales=tuple(locales),
        dims=reference.dims,
        class_names=reference.class_names,
        global_names=reference.global_names,
        local_names=reference.local_names,
    )


def save_corpus(corpus: Corpus, path) -> None:
    """Write a corpus as JSON lines (header first, one locale per line)."""
    header = {
        "K": corpus.dims.K,
        "V": corpus.dims.V,
        "F": corpus.dims.F,
        "class_names": list(corpus.class_names) if corpus.class_names else None,
        "global_names": list(corpus.global_names) if corpus.global_names else None,
        "local_names": list(corpus.local_names) if corpus.local_names else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for loc in corpus.locales:
            record = {
                "id": loc.id,
                "instances": [
                    {"g": list(inst.global_feats), "l": list(inst.local_feats)}
                    | ({"y": inst.label} if inst.label is not None else {})
                    for inst in loc.instances
                ],
            }
            fh.write(json.dumps(record) + "\n")


def load_corpus(path) -> Corpus:
    """Read a corpus written by :func:`save_corpus`, validating every record."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in (raw.strip() for raw in fh) if line]
    if not lines:
        raise CorpusError(f"{path}: empty corpus file")
    try:
        header = json.loads(lines[0])
        dims = Dims(int(header["K"]), int(header["V"]), int(header["F"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"{path}: malformed header line: {exc}") from exc
    locales = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
            loc_id = str(record["id"])
            instances = tuple(
                Instance(
                    tuple(entry["g"]),
                    tuple(entry.get("l", ())),
                    entry.get("y"),
                )
                for entry in record["instances"]
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{path}:{lineno}: malformed locale record: {exc}") from exc
        locales.append(Locale(loc_id, instances))
    if not locales:
        raise CorpusError(f"{path}: corpus file has zero locales")
    corpus = Corpus(
        locales=tuple(locales),
        dims=dims,
        class_names=_opt_names(header, "class_names"),
        global_names=_opt_names(header, "global_names"),
        local_names=_opt_names(header, "local_names"),
    )
    violations = validate(corpus)
    if violations:
        raise CorpusError(f"{path}: " + "; ".join(violations))
    return corpus


def _opt_names(header: dict, key: str) -> Optional[tuple[str, ...]]:
    val = header.get(key)
    return tuple(str(s) for s in val) if val is not None else None


def feature_counts(bags: Sequence[Sequence[int]], width: int) -> np.ndarray:
    """Dense (len(bags), width) matrix of bag occurrence counts."""
    out = np.zeros((len(bags), width), dtype=float)
    for row, bag in enumerate(bags):
        for idx in bag:
            out[row, idx] += 1.0
    return out
