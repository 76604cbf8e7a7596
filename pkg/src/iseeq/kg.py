"""Commonsense knowledge graph store.

Loads (subject, relation, object) triples from a TSV dump into an
immutable in-memory multigraph with an entity lexicon, and supports
depth-first multi-hop extraction of subject-rooted triples. The graph
is read-only after load, so it can be shared freely across worker
threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyInputError, ParseError

logger = logging.getLogger(__name__)


def canonical_entity(phrase: str) -> str:
    """Canonical entity id: trimmed, lowercased, internal whitespace -> '_'."""
    return "_".join(phrase.strip().lower().split())


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)


@dataclass
class KnowledgeGraph:
    """Directed labeled multigraph over canonical entity strings.

    ``adjacency`` holds outgoing triples per subject, in first-seen file
    order. ``lexicon`` maps surface phrases (both underscore and space
    forms) to the canonical entity id.
    """

    entities: set[str] = field(default_factory=set)
    adjacency: dict[str, list[Triple]] = field(default_factory=dict)
    lexicon: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self._max_phrase_len = max(
            (key.count("_") + 1 for key in self.lexicon), default=0
        )

    @property
    def max_phrase_len(self) -> int:
        """Longest lexicon phrase, in words."""
        return self._max_phrase_len

    @property
    def n_triples(self) -> int:
        return sum(len(ts) for ts in self.adjacency.values())

    def outgoing(self, entity: str) -> list[Triple]:
        return self.adjacency.get(entity, [])

    def _add_entity(self, entity: str) -> None:
        if entity not in self.entities:
            self.entities.add(entity)
            self.lexicon[entity] = entity
            spaced = entity.replace("_", " ")
            if spaced != entity:
                self.lexicon.setdefault(spaced, entity)
            self._max_phrase_len = max(self._max_phrase_len, entity.count("_") + 1)


def load_kg(path: str | Path, fmt: str = "tsv", strict: bool = False) -> KnowledgeGraph:
    """Load a knowledge graph from a tab-separated triple file.

    Each line is ``subject<TAB>relation<TAB>object``. Entities are
    canonicalized, exact duplicate triples are dropped. In strict mode a
    malformed line raises :class:`ParseError`; otherwise it is skipped
    with a warning.
    """
    if fmt != "tsv":
        raise ValueError(f"unsupported kg format: {fmt!r}")
    path = Path(path)
    kg = KnowledgeGraph()
    seen: set[tuple[str, str, str]] = set()
    n_bad = 0
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                if strict:
                    raise ParseError(f"expected 3 tab-separated fields, got {line!r}", line_no)
                logger.warning("%s:%d: skipping malformed line %r", path, line_no, line)
                n_bad += 1
                continue
            subject = canonical_entity(parts[0])
            relation = parts[1].strip()
            obj = canonical_entity(parts[2])
            key = (subject, relation, obj)
            if key in seen:
                continue
            seen.add(key)
            kg._add_entity(subject)
            kg._add_entity(obj)
            kg.adjacency.setdefault(subject, []).append(Triple(subject, relation, obj))
    if not kg.entities:
        raise EmptyInputError(f"{path}: no triples loaded")
    logger.info(
        "loaded %s: %d entities, %d triples (%d malformed lines skipped)",
        path, len(kg.entities), len(seen), n_bad,
    )
    return kg


def extract_triples(kg: KnowledgeGraph, seeds: list[str], max_hops: int = 2) -> list[Triple]:
    """Depth-first multi-hop extraction of subject-rooted triples.

    Starting from each seed entity, follows outgoing edges up to
    ``max_hops`` deep: at hop 1 only triples whose subject is the seed,
    at deeper hops triples rooted at objects discovered earlier. Triples
    where a seed occurs only as object are never emitted. Output order
    is deterministic: seeds in given order, adjacency lists in load
    order, depth-first. Seeds missing from the graph are skipped.
    """
    if max_hops < 1:
        raise ValueError(f"max_hops must be >= 1, got {max_hops}")
    out: list[Triple] = []
    emitted: set[tuple[str, str, str]] = set()
    best_depth: dict[str, int] = {}

    def visit(entity: str, depth: int) -> None:
        # depth counts edges already taken; subjects sit at depth <= max_hops - 1.
        # Re-expand when reached at a strictly shallower depth, otherwise a
        # node first seen near the hop limit would hide its descendants.
        if depth > max_hops - 1 or best_depth.get(entity, max_hops) <= depth:
            return
        best_depth[entity] = depth
        for triple in kg.outgoing(entity):
            key = triple.as_tuple()
            if key not in emitted:
                emitted.add(key)
                out.append(triple)
            visit(triple.object, depth + 1)

    for seed in seeds:
        seed = canonical_entity(seed)
        if seed not in kg.entities:
            logger.debug("seed %r not in graph, skipping", seed)
            continue
        visit(seed, 0)
    return out
