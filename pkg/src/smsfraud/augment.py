"""Label-preserving augmentation of SMS datasets.

Four single-record transformations are provided: implicit-meaning
expansion (insert a phrase at the start or end), synonym substitution,
borrowed-word vernacularization and morphological affixation. Matching is
case-insensitive on token boundaries; a replacement copies the capitalization
of the first character it replaces.

Lexicon resources are kept as JSON data files::

    {"phrases":   [{"text": "Mukudziwitsidwa kuti", "position": "prefix"}],
     "synonyms":  {"mulemele": ["mupeze ndalama zankhani nkhani"]},
     "loanwords": {"mujoine": "kuti mulowe"},
     "morph":     [{"match": "ine", "affix": "nd", "position": "prefix"}]}
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Dataset, SmsRecord, Source


class AugmentError(Exception):
    pass


class EmptyLexicon(AugmentError):
    pass


class NoMatch(AugmentError):
    """The record offers nothing this transformation can rewrite."""


class CannotReachTarget(AugmentError):
    def __init__(self, partial: Dataset, target_size: int):
        self.partial = partial
        self.target_size = target_size
        super().__init__(f"augmentation exhausted at {len(partial)} records (target {target_size})")


class Position(enum.Enum):
    PREFIX = "prefix"
    SUFFIX = "suffix"


class Transformation(enum.Enum):
    IMPLICIT = "implicit"
    SYNONYM = "synonym"
    VERNACULAR = "vernacular"
    MORPHOLOGY = "morphology"


@dataclass(frozen=True)
class PhraseLexicon:
    phrases: tuple  # of (text, Position)

    def __post_init__(self):
        object.__setattr__(self, "phrases", tuple((t, Position(p)) for t, p in self.phrases))
        if any(not t.strip() for t, _ in self.phrases):
            raise ValueError("phrases must be non-empty")


@dataclass(frozen=True)
class SynonymMap:
    entries: dict

    def __post_init__(self):
        entries = {k.lower(): tuple(v) for k, v in self.entries.items()}
        for k, v in entries.items():
            if not v or all(p.lower() == k for p in v):
                raise ValueError(f"synonym entry {k!r} maps only to itself")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class LoanwordMap:
    entries: dict

    def __post_init__(self):
        entries = {k.lower(): v for k, v in self.entries.items()}
        if any(not v.strip() for v in entries.values()):
            raise ValueError("loanword replacements must be non-empty")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class MorphRule:
    match: str
    affix: str
    position: Position = Position.PREFIX
    result: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "match", self.match.lower())
        object.__setattr__(self, "position", Position(self.position))
        if self.rewrite(self.match) == self.match:
            raise ValueError(f"morph rule on {self.match!r} does not change the token")

    def rewrite(self, token: str) -> str:
        if self.result is not None:
            return self.result
        return self.affix + token if self.position is Position.PREFIX else token + self.affix


@dataclass(frozen=True)
class MorphRuleSet:
    rules: tuple


@dataclass(frozen=True)
class Lexicons:
    phrases: PhraseLexicon = field(default_factory=lambda: PhraseLexicon(()))
    synonyms: SynonymMap = field(default_factory=lambda: SynonymMap({}))
    loanwords: LoanwordMap = field(default_factory=lambda: LoanwordMap({}))
    morph: MorphRuleSet = field(default_factory=lambda: MorphRuleSet(()))

    @classmethod
    def from_dict(cls, data: dict) -> "Lexicons":
        return cls(
            PhraseLexicon(tuple((p["text"], p.get("position", "prefix")) for p in data.get("phrases", []))),
            SynonymMap(dict(data.get("synonyms", {}))),
            LoanwordMap(dict(data.get("loanwords", {}))),
            MorphRuleSet(tuple(
                MorphRule(m["match"], m.get("affix", ""), Position(m.get("position", "prefix")), m.get("result"))
                for m in data.get("morph", [])
            )),
        )

    @classmethod
    def load(cls, path) -> "Lexicons":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def builtin_lexicons() -> Lexicons:
    """Small lexicon seeded with the exemplar rewrites documented for the corpus."""
    text = resources.files("smsfraud").joinpath("data/lexicon.json").read_text(encoding="utf-8")
    return Lexicons.from_dict(json.loads(text))


@dataclass(frozen=True)
class AugmentationPlan:
    transformations: tuple = tuple(Transformation)
    max_variants: int = 3
    seed: int = 0

    def __post_init__(self):
        ts = tuple(Transformation(t) for t in self.transformations)
        if not ts:
            raise ValueError("at least one transformation must be enabled")
        if self.max_variants < 1:
            raise ValueError("max_variants must be >= 1")
        object.__setattr__(self, "transformations", ts)


def _pattern(key: str) -> re.Pattern:
    return re.compile(r"(?<!\w)" + re.escape(key) + r"(?!\w)", re.IGNORECASE)


def _match_case(original: str, replacement: str) -> str:
    if original[:1].isupper() and replacement:
        return replacement[0].upper() + replacement[1:]
    return replacement


def _derived(r: SmsRecord, text: str) -> SmsRecord:
    parent = r.parent_id if r.source is Source.AUGMENTED else r.sms_id
    return replace(r, text=text, source=Source.AUGMENTED, parent_id=parent)


def expand_implicit(r: SmsRecord, lex: PhraseLexicon, rng: np.random.Generator) -> SmsRecord:
    if not lex.phrases:
        raise EmptyLexicon("phrase lexicon is empty")
    phrase, pos = lex.phrases[int(rng.integers(len(lex.phrases)))] if len(lex.phrases) > 1 else lex.phrases[0]
    text = f"{phrase} {r.text}" if pos is Position.PREFIX else f"{r.text} {phrase}"
    return _derived(r, text)


def substitute_synonyms(r: SmsRecord, smap: SynonymMap, rng: np.random.Generator) -> SmsRecord:
    text = r.text
    matched = False
    # longer keys first so phrase keys win over their sub-words
    for key in sorted(smap.entries, key=lambda k: (-len(k), k)):
        pat = _pattern(key)
        if not pat.search(text):
            continue
        options = smap.entries[key]
        choice = options[int(rng.integers(len(options)))] if len(options) > 1 else options[0]
        text = pat.sub(lambda m: _match_case(m.group(0), choice), text)
        matched = True
    if not matched or text == r.text:
        raise NoMatch(f"{r.sms_id}: no synonym key found")
    return _derived(r, text)


def vernacularize(r: SmsRecord, lmap: LoanwordMap) -> SmsRecord:
    text = r.text
    for key in sorted(lmap.entries, key=lambda k: (-len(k), k)):
        text = _pattern(key).sub(lambda m: _match_case(m.group(0), lmap.entries[key]), text)
    if text == r.text:
        raise NoMatch(f"{r.sms_id}: no borrowed word found")
    return _derived(r, text)


def apply_morphology(r: SmsRecord, rules: MorphRuleSet) -> SmsRecord:
    text = r.text
    for rule in rules.rules:
        text = _pattern(rule.match).sub(lambda m: _match_case(m.group(0), rule.rewrite(m.group(0).lower())), text)
    if text == r.text:
        raise NoMatch(f"{r.sms_id}: no morph rule applies")
    return _derived(r, text)


def _apply(t: Transformation, r: SmsRecord, lex: Lexicons, rng) -> SmsRecord:
    if t is Transformation.IMPLICIT:
        return expand_implicit(r, lex.phrases, rng)
    if t is Transformation.SYNONYM:
        return substitute_synonyms(r, lex.synonyms, rng)
    if t is Transformation.VERNACULAR:
        return vernacularize(r, lex.loanwords)
    return apply_morphology(r, lex.morph)


def augment_dataset(d: Dataset, plan: AugmentationPlan, lexicons: Lexicons, target_size: int,
                    labels: Optional[Sequence] = None) -> Dataset:
    """Grow ``d`` to ``target_size`` records with augmented variants.

    Records are visited round-robin in ingest order; each visit tries the
    enabled transformations in plan order. Variants become candidates for
    further rewriting in the next round, but a chain never repeats a
    transformation. Every original contributes at most ``plan.max_variants``
    variants. Texts equal (after whitespace normalisation) to an existing
    record are discarded.

    ``labels`` restricts which classes are augmented (default: all).

    Raises
    ------
    CannotReachTarget
        When no transformation applies anywhere; ``exc.partial`` holds the
        grown dataset.
    """
    if target_size < len(d):
        raise ValueError(f"target_size {target_size} is below dataset size {len(d)}")
    rng = np.random.default_rng(plan.seed)
    out = list(d.records)
    seen = {" ".join(r.text.split()) for r in out}
    ids = {r.sms_id for r in out}
    budget = {r.sms_id: plan.max_variants for r in out}
    wanted = set(labels) if labels is not None else None
    # frontier entries: (record, root id, transformations already applied)
    frontier = [(r, r.sms_id, frozenset()) for r in d.records if wanted is None or r.label in wanted]
    serial = {}
    while len(out) < target_size and frontier:
        nxt = []
        for rec, root, used in frontier:
            for t in plan.transformations:
                if len(out) >= target_size:
                    break
                if budget[root] == 0 or t in used:
                    continue
                try:
                    new = _apply(t, rec, lexicons, rng)
                except (NoMatch, EmptyLexicon):
                    continue
                key = " ".join(new.text.split())
                if key in seen:
                    continue
                n = serial.get(root, 0)
                while f"{root}-aug{n}" in ids:
                    n += 1
                serial[root] = n + 1
                new = replace(new, sms_id=f"{root}-aug{n}", parent_id=root, dataset_tag=d.tag)
                ids.add(new.sms_id)
                seen.add(key)
                budget[root] -= 1
                out.append(new)
                nxt.append((new, root, used | {t}))
        frontier = nxt
    result = Dataset(tuple(out), d.tag, dict(d.metadata))
    if len(result) < target_size:
        raise CannotReachTarget(result, target_size)
    return result
