"""Data model, ingestion, and descriptive statistics for persuasion dialogues.

A corpus is a set of two-party donation dialogues (persuader vs. persuadee)
plus one participation record per (dialogue, worker) with demographics, a
23-dimensional psychological survey vector, and the promised/actual donation
amounts. The canonical on-disk format is a pair of UTF-8 CSVs; see
``DIALOGUE_COLUMNS`` and ``PROFILE_COLUMNS``.
"""

from __future__ import annotations

import csv
import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Union

from .errors import (
    DegenerateGroupError,
    EmptyAnnotationError,
    LinkError,
    SchemaError,
)


class Role(Enum):
    PERSUADER = "persuader"
    PERSUADEE = "persuadee"


class StrategyLabel(Enum):
    """The ten persuasion strategies plus the non-strategy class.

    Enum order is the canonical class order everywhere (class indices,
    confusion-matrix axes, argmax tie-breaking).
    """

    LOGICAL_APPEAL = "logical_appeal"
    EMOTION_APPEAL = "emotion_appeal"
    CREDIBILITY_APPEAL = "credibility_appeal"
    FOOT_IN_THE_DOOR = "foot_in_the_door"
    SELF_MODELING = "self_modeling"
    PERSONAL_STORY = "personal_story"
    DONATION_INFORMATION = "donation_information"
    SOURCE_INQUIRY = "source_inquiry"
    TASK_INQUIRY = "task_inquiry"
    PERSONAL_INQUIRY = "personal_inquiry"
    NON_STRATEGY = "non_strategy"


APPEALS = (
    StrategyLabel.LOGICAL_APPEAL,
    StrategyLabel.EMOTION_APPEAL,
    StrategyLabel.CREDIBILITY_APPEAL,
    StrategyLabel.FOOT_IN_THE_DOOR,
    StrategyLabel.SELF_MODELING,
    StrategyLabel.PERSONAL_STORY,
    StrategyLabel.DONATION_INFORMATION,
)
INQUIRIES = (
    StrategyLabel.SOURCE_INQUIRY,
    StrategyLabel.TASK_INQUIRY,
    StrategyLabel.PERSONAL_INQUIRY,
)
STRATEGIES = APPEALS + INQUIRIES  # the 10 classification targets minus non-strategy


class PersuadeeAct(Enum):
    """Dialogue acts annotated on persuadee sentences (never a model target)."""

    ASK_ORG_INFO = "ask_org_info"
    ASK_DONATION_PROCEDURE = "ask_donation_procedure"
    POSITIVE_REACTION = "positive_reaction"
    NEUTRAL_REACTION = "neutral_reaction"
    NEGATIVE_REACTION = "negative_reaction"
    AGREE_DONATION = "agree_donation"
    DISAGREE_DONATION = "disagree_donation"
    POSITIVE_TO_INQUIRY = "positive_to_inquiry"
    NEGATIVE_TO_INQUIRY = "negative_to_inquiry"
    OTHER = "other"


_STRATEGY_BY_VALUE = {l.value: l for l in StrategyLabel}
_ACT_BY_VALUE = {a.value: a for a in PersuadeeAct}

BIG_FIVE = ("extrovert", "agreeable", "conscientious", "neurotic", "open")
MORAL_FOUNDATIONS = ("care", "fairness", "loyalty", "authority", "purity", "freedom")
SCHWARTZ = (
    "conform",
    "tradition",
    "benevolence",
    "universalism",
    "self_direction",
    "stimulation",
    "hedonism",
    "achievement",
    "power",
    "security",
)
DECISION_STYLE = ("rational", "intuitive")
TRAIT_NAMES = BIG_FIVE + MORAL_FOUNDATIONS + SCHWARTZ + DECISION_STYLE  # 23 scores

DEMOGRAPHIC_CATEGORICAL = (
    "sex",
    "race",
    "education",
    "marital",
    "employment",
    "religion",
    "ideology",
)

DIALOGUE_COLUMNS = ("dialogue_id", "turn", "sentence_idx", "role", "text", "label")
PROFILE_COLUMNS = (
    ("dialogue_id", "worker_id", "role", "age")
    + DEMOGRAPHIC_CATEGORICAL
    + ("income",)
    + TRAIT_NAMES
    + ("donation_promised", "donation_actual")
)

DEFAULT_DONATION_CAP = 2.00
MIN_TURNS_PER_SIDE = 10

_PUNCT_RE = re.compile("([" + re.escape(string.punctuation) + "])")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace after separating punctuation."""
    return _PUNCT_RE.sub(r" \1 ", text.lower()).split()


def segment(text: str) -> list[str]:
    """Split text into sentences at . ! ? followed by whitespace.

    Terminators stay attached to their sentence; a dot with no following
    whitespace (URLs, decimals) never splits. Empty input gives [].
    """
    text = text.strip()
    if not text:
        return []
    return _SENTENCE_SPLIT_RE.split(text)


def word_count(text: str) -> int:
    """Whitespace word count, used for the words-per-utterance statistics."""
    return len(text.split())


@dataclass
class Sentence:
    dialogue_id: str
    turn_index: int
    sentence_index: int
    role: Role
    text: str
    tokens: list[str]
    label: Optional[Union[StrategyLabel, PersuadeeAct]] = None


@dataclass
class Dialogue:
    id: str
    turns: list[list[Sentence]]  # one inner list per turn, single role each
    persuader_id: str
    persuadee_id: str
    annotated: bool

    def turn_role(self, turn: int) -> Role:
        return self.turns[turn][0].role

    def side_turn(self, turn: int) -> int:
        """Per-side turn index: how many earlier turns share this turn's role."""
        role = self.turn_role(turn)
        return sum(1 for t in range(turn) if self.turn_role(t) is role)

    def sentences(self, role: Optional[Role] = None) -> Iterator[Sentence]:
        for turn in self.turns:
            for sentence in turn:
                if role is None or sentence.role is role:
                    yield sentence


@dataclass
class ParticipantProfile:
    """One participation record: a worker playing one role in one dialogue."""

    worker_id: str
    dialogue_id: str
    role: Role
    age: float
    sex: str
    race: str
    education: str
    marital: str
    employment: str
    religion: str
    ideology: str
    income: float
    big_five: dict[str, float]
    moral_foundations: dict[str, float]
    schwartz: dict[str, float]
    decision_style: dict[str, float]
    donation_promised: Optional[float] = None
    donation_actual: Optional[float] = None

    def trait(self, name: str) -> float:
        for block in (self.big_five, self.moral_foundations, self.schwartz, self.decision_style):
            if name in block:
                return block[name]
        raise KeyError(name)

    def psychological_vector(self) -> list[float]:
        """The 23 survey scores in canonical order (5 + 6 + 10 + 2)."""
        return [self.trait(name) for name in TRAIT_NAMES]


@dataclass(frozen=True)
class RowIssue:
    file: str
    row: int  # 1-based data record index
    message: str

    def __str__(self) -> str:
        return f"{self.file} row {self.row}: {self.message}"


@dataclass
class IngestReport:
    errors: list[RowIssue] = field(default_factory=list)
    warnings: list[RowIssue] = field(default_factory=list)

    def error(self, file: str, row: int, message: str) -> None:
        self.errors.append(RowIssue(file, row, message))

    def warn(self, file: str, row: int, message: str) -> None:
        self.warnings.append(RowIssue(file, row, message))


@dataclass
class Corpus:
    dialogues: list[Dialogue]
    profiles: list[ParticipantProfile]  # file row order = task completion order
    vocabulary: set[str]
    report: IngestReport = field(default_factory=IngestReport, compare=False)

    def annotated(self) -> list[Dialogue]:
        return [d for d in self.dialogues if d.annotated]

    def profile_for(self, dialogue_id: str, role: Role) -> Optional[ParticipantProfile]:
        for p in self.profiles:
            if p.dialogue_id == dialogue_id and p.role is role:
                return p
        return None

    def role_profiles(self, role: Role) -> list[ParticipantProfile]:
        return [p for p in self.profiles if p.role is role]


def read_column_map(path: str | Path) -> dict[str, str]:
    """Read a key=value file mapping canonical column names to file columns."""
    mapping = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError(f"column map line is not key=value: {line!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _check_header(header: list[str], required: tuple[str, ...], column_map: dict[str, str], file: str):
    mapped = {c: column_map.get(c, c) for c in required}
    missing = [f"{c} (column {mapped[c]!r})" for c in required if mapped[c] not in header]
    if missing:
        raise SchemaError(f"{file}: missing required columns: {', '.join(missing)}")
    return mapped


def _parse_float(value: str, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"{what}: could not parse {value!r} as a number") from None


def _parse_optional_amount(value: str, what: str) -> Optional[float]:
    value = value.strip()
    if not value:
        return None
    amount = _parse_float(value, what)
    if amount < 0:
        raise ValueError(f"{what}: negative amount {amount}")
    return amount


def _parse_dialogue_row(row: dict[str, str], cols: dict[str, str]) -> Sentence:
    get = lambda c: row[cols[c]]
    dialogue_id = get("dialogue_id").strip()
    if not dialogue_id:
        raise ValueError("dialogue_id: empty")
    turn = int(_parse_float(get("turn"), "turn"))
    if turn < 0:
        raise ValueError(f"turn: negative index {turn}")
    sentence_idx = int(_parse_float(get("sentence_idx"), "sentence_idx"))
    if sentence_idx < 0:
        raise ValueError(f"sentence_idx: negative index {sentence_idx}")
    role_value = get("role").strip().lower()
    try:
        role = Role(role_value)
    except ValueError:
        raise ValueError(f"role: unknown role {role_value!r}") from None
    text = get("text")
    tokens = tokenize(text)
    if not tokens:
        raise ValueError("text: empty after tokenization")
    label_value = (get("label") or "").strip()
    label: Optional[Union[StrategyLabel, PersuadeeAct]] = None
    if label_value:
        table = _STRATEGY_BY_VALUE if role is Role.PERSUADER else _ACT_BY_VALUE
        if label_value not in table:
            raise ValueError(f"label: {label_value!r} is not a valid {role.value} label")
        label = table[label_value]
    return Sentence(dialogue_id, turn, sentence_idx, role, text, tokens, label)


def _parse_profile_row(row: dict[str, str], cols: dict[str, str], donation_cap: float) -> ParticipantProfile:
    get = lambda c: row[cols[c]]
    worker_id = get("worker_id").strip()
    dialogue_id = get("dialogue_id").strip()
    if not worker_id or not dialogue_id:
        raise ValueError("worker_id/dialogue_id: empty")
    role = Role(get("role").strip().lower())
    age = _parse_float(get("age"), "age")
    income = _parse_float(get("income"), "income")
    traits = {name: _parse_float(get(name), name) for name in TRAIT_NAMES}
    promised = _parse_optional_amount(get("donation_promised"), "donation_promised")
    actual = _parse_optional_amount(get("donation_actual"), "donation_actual")
    if actual is not None and actual > donation_cap:
        raise ValueError(f"donation_actual: {actual} exceeds the payment cap {donation_cap}")
    return ParticipantProfile(
        worker_id=worker_id,
        dialogue_id=dialogue_id,
        role=role,
        age=age,
        sex=get("sex").strip(),
        race=get("race").strip(),
        education=get("education").strip(),
        marital=get("marital").strip(),
        employment=get("employment").strip(),
        religion=get("religion").strip(),
        ideology=get("ideology").strip(),
        income=income,
        big_five={k: traits[k] for k in BIG_FIVE},
        moral_foundations={k: traits[k] for k in MORAL_FOUNDATIONS},
        schwartz={k: traits[k] for k in SCHWARTZ},
        decision_style={k: traits[k] for k in DECISION_STYLE},
        donation_promised=promised,
        donation_actual=actual,
    )


def _assemble_dialogue(dialogue_id: str, rows: list[Sentence], report: IngestReport) -> Dialogue:
    rows = sorted(rows, key=lambda s: (s.turn_index, s.sentence_index))
    turns: list[list[Sentence]] = []
    for sentence in rows:
        if turns and turns[-1][0].turn_index == sentence.turn_index:
            turns[-1].append(sentence)
        else:
            turns.append([sentence])
    for turn in turns:
        roles = {s.role for s in turn}
        if len(roles) > 1:
            raise ValueError(f"turn {turn[0].turn_index} mixes both roles")
    for prev, cur in zip(turns, turns[1:]):
        if prev[0].role is cur[0].role:
            report.warn(
                "dialogues",
                0,
                f"dialogue {dialogue_id!r}: turns {prev[0].turn_index} and "
                f"{cur[0].turn_index} do not alternate roles",
            )
            break
    for role in Role:
        n_side = sum(1 for t in turns if t[0].role is role)
        if n_side < MIN_TURNS_PER_SIDE:
            report.warn(
                "dialogues",
                0,
                f"dialogue {dialogue_id!r}: only {n_side} {role.value} turns "
                f"(expected at least {MIN_TURNS_PER_SIDE})",
            )
    labeled = [s.label is not None for s in rows]
    annotated = all(labeled)
    if any(labeled) and not annotated:
        report.warn("dialogues", 0, f"dialogue {dialogue_id!r}: partially labeled; not counted as annotated")
    return Dialogue(dialogue_id, turns, persuader_id="", persuadee_id="", annotated=annotated)


def ingest(
    dialogue_file: str | Path,
    profile_file: str | Path,
    column_map: Optional[dict[str, str]] = None,
    donation_cap: float = DEFAULT_DONATION_CAP,
) -> Corpus:
    """Read the two canonical CSVs into a validated Corpus.

    Unparseable rows are collected into ``corpus.report.errors`` (a bad
    sentence row drops its whole dialogue). A dialogue whose participants
    have no profile rows raises LinkError listing the broken links.
    """
    column_map = dict(column_map or {})
    report = IngestReport()

    sentences_by_dialogue: dict[str, list[Sentence]] = {}
    bad_dialogues: set[str] = set()
    with open(dialogue_file, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = _check_header(reader.fieldnames or [], DIALOGUE_COLUMNS, column_map, "dialogues")
        for i, row in enumerate(reader, start=1):
            try:
                sentence = _parse_dialogue_row(row, cols)
            except ValueError as exc:
                report.error("dialogues", i, str(exc))
                did = (row.get(cols["dialogue_id"]) or "").strip()
                if did:
                    bad_dialogues.add(did)
                continue
            sentences_by_dialogue.setdefault(sentence.dialogue_id, []).append(sentence)

    dialogues: list[Dialogue] = []
    for dialogue_id, rows in sentences_by_dialogue.items():
        if dialogue_id in bad_dialogues:
            report.error("dialogues", 0, f"dialogue {dialogue_id!r} dropped: contains unparseable rows")
            continue
        try:
            dialogues.append(_assemble_dialogue(dialogue_id, rows, report))
        except ValueError as exc:
            report.error("dialogues", 0, f"dialogue {dialogue_id!r} dropped: {exc}")

    profiles: list[ParticipantProfile] = []
    with open(profile_file, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = _check_header(reader.fieldnames or [], PROFILE_COLUMNS, column_map, "profiles")
        for i, row in enumerate(reader, start=1):
            try:
                profiles.append(_parse_profile_row(row, cols, donation_cap))
            except ValueError as exc:
                report.error("profiles", i, str(exc))

    by_link = {(p.dialogue_id, p.role): p for p in reversed(profiles)}
    known_ids = {d.id for d in dialogues}
    missing = []
    for dialogue in dialogues:
        for role, attr in ((Role.PERSUADER, "persuader_id"), (Role.PERSUADEE, "persuadee_id")):
            profile = by_link.get((dialogue.id, role))
            if profile is None:
                missing.append((dialogue.id, role.value))
            else:
                setattr(dialogue, attr, profile.worker_id)
    if missing:
        raise LinkError(missing, report)
    for i, p in enumerate(profiles, start=1):
        if p.dialogue_id not in known_ids:
            report.warn("profiles", i, f"profile for worker {p.worker_id!r} references unknown dialogue {p.dialogue_id!r}")

    vocabulary = {token for d in dialogues for s in d.sentences() for token in s.tokens}
    return Corpus(dialogues, profiles, vocabulary, report)


def serialize(corpus: Corpus, dialogue_file: str | Path, profile_file: str | Path) -> None:
    """Write a corpus back to the canonical CSV pair (inverse of ingest)."""

    def fmt(x) -> str:
        return "" if x is None else str(x)

    with open(dialogue_file, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIALOGUE_COLUMNS)
        for d in corpus.dialogues:
            for s in d.sentences():
                writer.writerow(
                    [d.id, s.turn_index, s.sentence_index, s.role.value, s.text,
                     s.label.value if s.label else ""]
                )
    with open(profile_file, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROFILE_COLUMNS)
        for p in corpus.profiles:
            row = [p.dialogue_id, p.worker_id, p.role.value, fmt(p.age)]
            row += [getattr(p, c) for c in DEMOGRAPHIC_CATEGORICAL]
            row += [fmt(p.income)]
            row += [fmt(p.trait(name)) for name in TRAIT_NAMES]
            row += [fmt(p.donation_promised), fmt(p.donation_actual)]
            writer.writerow(row)


@dataclass
class CorpusStats:
    n_dialogues: int
    n_annotated: int
    n_participants: int
    mean_donation: float
    mean_turns_per_side: float
    mean_words_per_utterance: float
    mean_words_persuader: float
    mean_words_persuadee: float
    n_unique_tokens: int
    donated: dict[str, int]
    not_donated: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "n_annotated": self.n_annotated,
            "n_participants": self.n_participants,
            "mean_donation": self.mean_donation,
            "mean_turns_per_side": self.mean_turns_per_side,
            "mean_words_per_utterance": self.mean_words_per_utterance,
            "mean_words_persuader": self.mean_words_persuader,
            "mean_words_persuadee": self.mean_words_persuadee,
            "n_unique_tokens": self.n_unique_tokens,
            "donated": dict(self.donated),
            "not_donated": dict(self.not_donated),
        }

    def to_text(self) -> str:
        rows = [
            ("dialogues", f"{self.n_dialogues:,}"),
            ("annotated dialogues", f"{self.n_annotated:,}"),
            ("participants", f"{self.n_participants:,}"),
            ("avg donation (persuadee, actual)", f"{self.mean_donation:.2f}"),
            ("avg turns per dialogue (per side)", f"{self.mean_turns_per_side:.2f}"),
            ("avg words per utterance", f"{self.mean_words_per_utterance:.2f}"),
            ("  persuader", f"{self.mean_words_persuader:.2f}"),
            ("  persuadee", f"{self.mean_words_persuadee:.2f}"),
            ("unique tokens", f"{self.n_unique_tokens:,}"),
        ]
        for role in Role:
            rows.append((f"{role.value} donated", f"{self.donated[role.value]:,}"))
            rows.append((f"{role.value} not donated", f"{self.not_donated[role.value]:,}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Table of descriptive statistics over dialogues and participants."""
    if not corpus.dialogues:
        raise ValueError("empty corpus: no dialogues to summarize")

    n_dialogues = len(corpus.dialogues)
    total_turns = sum(len(d.turns) for d in corpus.dialogues)

    words = {Role.PERSUADER: [], Role.PERSUADEE: []}
    for d in corpus.dialogues:
        for turn in d.turns:
            words[turn[0].role].append(sum(word_count(s.text) for s in turn))
    all_words = words[Role.PERSUADER] + words[Role.PERSUADEE]

    persuadees = corpus.role_profiles(Role.PERSUADEE)
    donations = [p.donation_actual or 0.0 for p in persuadees]
    donated = {}
    not_donated = {}
    for role in Role:
        group = corpus.role_profiles(role)
        n_donated = sum(1 for p in group if (p.donation_actual or 0.0) > 0)
        donated[role.value] = n_donated
        not_donated[role.value] = len(group) - n_donated

    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    return CorpusStats(
        n_dialogues=n_dialogues,
        n_annotated=len(corpus.annotated()),
        n_participants=len({p.worker_id for p in corpus.profiles}),
        mean_donation=mean(donations),
        mean_turns_per_side=total_turns / (2 * n_dialogues),
        mean_words_per_utterance=mean(all_words),
        mean_words_persuader=mean(words[Role.PERSUADER]),
        mean_words_persuadee=mean(words[Role.PERSUADEE]),
        n_unique_tokens=len(corpus.vocabulary),
        donated=donated,
        not_donated=not_donated,
    )


def labeled_persuader_sentences(dialogues: list[Dialogue]) -> list[tuple[Sentence, Dialogue]]:
    """All labeled persuader sentences with their dialogues, corpus order."""
    pairs = []
    for d in dialogues:
        for s in d.sentences(Role.PERSUADER):
            if isinstance(s.label, StrategyLabel):
                pairs.append((s, d))
    return pairs


def strategy_counts(corpus: Corpus) -> dict[StrategyLabel, int]:
    """Occurrences of each strategy class over labeled persuader sentences."""
    pairs = labeled_persuader_sentences(corpus.dialogues)
    if not pairs:
        raise EmptyAnnotationError("corpus has no labeled persuader sentences")
    counts = Counter(s.label for s, _ in pairs)
    return {label: counts.get(label, 0) for label in StrategyLabel}


def turn_histogram(corpus: Corpus, label: StrategyLabel, max_turn: int) -> list[int]:
    """Counts of a strategy per persuader-side turn; last bucket absorbs later turns."""
    histogram = [0] * (max_turn + 1)
    for sentence, dialogue in labeled_persuader_sentences(corpus.dialogues):
        if sentence.label is label:
            t = min(dialogue.side_turn(sentence.turn_index), max_turn)
            histogram[t] += 1
    return histogram


def dedup_first_task(profiles: list[ParticipantProfile]) -> list[ParticipantProfile]:
    """Keep each worker's earliest record; row order is completion order."""
    seen: set[str] = set()
    kept = []
    for p in profiles:
        if p.worker_id not in seen:
            seen.add(p.worker_id)
            kept.append(p)
    return kept


def trait_means_by_donation(
    corpus: Corpus, use_promised: bool = False
) -> dict[str, tuple[float, float]]:
    """Big-Five group means for persuadees who donated vs. did not.

    "Donated" means actual amount > 0, or promised amount > 0 when
    ``use_promised`` is set.
    """
    amount = (lambda p: p.donation_promised) if use_promised else (lambda p: p.donation_actual)
    donated, abstained = [], []
    for p in corpus.role_profiles(Role.PERSUADEE):
        (donated if (amount(p) or 0.0) > 0 else abstained).append(p)
    if not donated or not abstained:
        raise DegenerateGroupError(
            f"need both groups nonempty: {len(donated)} donated, {len(abstained)} did not"
        )
    result = {}
    for trait in BIG_FIVE:
        mean_donated = sum(p.trait(trait) for p in donated) / len(donated)
        mean_abstained = sum(p.trait(trait) for p in abstained) / len(abstained)
        result[trait] = (mean_donated, mean_abstained)
    return result
