"""Semantic query expansion.

Detects knowledge-graph entities mentioned in a short query and builds
the knowledge-augmented form of the query by injecting outgoing triples
inline, right after the phrase that mentions each entity. Entity
detection is lexicon-driven: longest match wins, with a secondary pass
that also surfaces single-token entities hiding inside longer matches
(so "career options" yields both career_options and career).
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field

from .kg import KnowledgeGraph, Triple, canonical_entity, extract_triples

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[A-Za-z0-9_']+")

# Display forms for a few common run-together relation spellings seen in
# commonsense KG dumps. Applied only when rendering injected clauses;
# stored triples keep the raw label.
_RELATION_DISPLAY = {
    "isrelatedto": "is related to",
    "relatedto": "related to",
    "isa": "is a",
    "partof": "part of",
    "hasa": "has a",
    "usedfor": "used for",
    "capableof": "capable of",
    "atlocation": "at location",
}


class QueryKind(enum.Enum):
    DESCRIPTION_ONLY = "description_only"
    TITLE_AND_DESCRIPTION = "title_and_description"
    TOPIC_AND_ASPECTS = "topic_and_aspects"


@dataclass(frozen=True)
class QueryDescription:
    id: str
    text: str
    kind: QueryKind = QueryKind.DESCRIPTION_ONLY

    def __post_init__(self):
        if not self.text:
            raise ValueError("query text must be non-empty")


@dataclass
class ExpandedQuery:
    """A query plus its detected entities and the augmented text.

    ``injections`` records (offset_in_source, inserted_text) pairs, so
    stripping every inserted string recovers the source text exactly.
    """

    source: QueryDescription
    entities: list[str]
    spans: list[tuple[int, int]]
    triples_by_entity: dict[str, list[Triple]]
    augmented_text: str
    injections: list[tuple[int, str]] = field(default_factory=list)


def _tokenize(text: str) -> list[tuple[str, int, int]]:
    """(normalized_token, start, end) for each word-like run in text.

    Lowercases and strips possessive 's so "physician's" matches the
    entity token "physician".
    """
    out = []
    for m in _TOKEN_RE.finditer(text):
        tok = m.group().lower().strip("'")
        if tok.endswith("'s"):
            tok = tok[:-2]
        if tok:
            out.append((tok, m.start(), m.end()))
    return out


def extract_entities(
    kg: KnowledgeGraph, text: str
) -> tuple[list[str], list[tuple[int, int]]]:
    """Match lexicon entities in ``text``.

    Primary pass: maximal non-overlapping matches, longest first, left
    to right. Secondary pass: single tokens that are themselves entities
    but were swallowed by a longer match. Matching is case-insensitive
    and treats spaces, underscores and possessives as equivalent.
    Returns parallel (entity_ids, first_mention_spans) lists; an entity
    appears once, at its first mention.
    """
    if not text:
        raise ValueError("text must be non-empty")
    tokens = _tokenize(text)
    entities: list[str] = []
    spans: list[tuple[int, int]] = []
    found: set[str] = set()

    i = 0
    while i < len(tokens):
        matched = False
        for n in range(min(kg.max_phrase_len, len(tokens) - i), 0, -1):
            phrase = "_".join(t[0] for t in tokens[i : i + n])
            entity = kg.lexicon.get(phrase)
            if entity is not None:
                if entity not in found:
                    found.add(entity)
                    entities.append(entity)
                    spans.append((tokens[i][1], tokens[i + n - 1][2]))
                i += n
                matched = True
                break
        if not matched:
            i += 1

    for tok, start, end in tokens:
        entity = kg.lexicon.get(tok)
        if entity is not None and entity not in found:
            found.add(entity)
            entities.append(entity)
            spans.append((start, end))
    return entities, spans


def render_clause(triples: list[Triple]) -> str:
    """Inline clause for a group of triples: objects comma-joined per
    (subject, relation), groups space-joined, e.g.
    "career_options is related to career_choice, profession"."""
    groups: dict[tuple[str, str], list[str]] = {}
    for t in triples:
        groups.setdefault((t.subject, t.relation), []).append(t.object)
    parts = []
    for (subject, relation), objects in groups.items():
        shown = _RELATION_DISPLAY.get(relation, relation)
        parts.append(f"{subject} {shown} {', '.join(objects)}")
    return " ".join(parts)


def expand_query(
    kg: KnowledgeGraph,
    query: QueryDescription,
    max_hops: int = 2,
    max_triples_per_entity: int = 8,
    entities: list[str] | None = None,
    spans: list[tuple[int, int]] | None = None,
) -> ExpandedQuery:
    """Build the knowledge-augmented query.

    Each detected entity contributes up to ``max_triples_per_entity``
    triples (depth-first order). Clauses are injected after the first
    mention of the entity; a sub-entity found inside a longer match is
    anchored at the end of the covering match so the surrounding phrase
    is never split. Pre-extracted ``entities``/``spans`` (e.g. from an
    external phrase parser) can be supplied to bypass lexicon matching.
    """
    if max_triples_per_entity < 1:
        raise ValueError("max_triples_per_entity must be >= 1")
    if entities is None or spans is None:
        entities, spans = extract_entities(kg, query.text)

    triples_by_entity: dict[str, list[Triple]] = {}
    for entity in entities:
        triples_by_entity[entity] = extract_triples(kg, [entity], max_hops)[
            :max_triples_per_entity
        ]

    # Anchor each entity's clause at the end of the covering span: the
    # entity's own span, or the enclosing one when it is a sub-match.
    def anchor_for(span: tuple[int, int]) -> int:
        best = span[1]
        for other in spans:
            if other[0] <= span[0] and span[1] <= other[1] and other[1] > best:
                best = other[1]
        return best

    by_anchor: dict[int, list[str]] = {}
    for entity, span in zip(entities, spans):
        if not triples_by_entity[entity]:
            continue
        by_anchor.setdefault(anchor_for(span), []).append(entity)

    pieces: list[str] = []
    injections: list[tuple[int, str]] = []
    cursor = 0
    for anchor in sorted(by_anchor):
        clause = " " + " ".join(
            render_clause(triples_by_entity[e]) for e in by_anchor[anchor]
        )
        pieces.append(query.text[cursor:anchor])
        pieces.append(clause)
        injections.append((anchor, clause))
        cursor = anchor
    pieces.append(query.text[cursor:])

    return ExpandedQuery(
        source=query,
        entities=list(entities),
        spans=list(spans),
        triples_by_entity=triples_by_entity,
        augmented_text="".join(pieces),
        injections=injections,
    )


def strip_injections(eq: ExpandedQuery) -> str:
    """Inverse of the injection step; used to check the round-trip."""
    text = eq.augmented_text
    out = []
    pos = 0
    cursor = 0
    for offset, inserted in eq.injections:
        take = offset - cursor
        out.append(text[pos : pos + take])
        pos += take + len(inserted)
        cursor = offset
    out.append(text[pos:])
    return "".join(out)
