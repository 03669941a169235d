"""Few-shot prompt rendering, tail extraction, and fine-tune example rendering.

Shot templates are configuration data (one record per relation with literal
{HEAD} / {TAIL} markers); the built-in defaults are the Japanese patterns the
whole pipeline was designed around. Everything here is pure.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .graph import Relation, Triplet, Event, normalize_text

HEAD_MARKER = "{HEAD}"
TAIL_MARKER = "{TAIL}"

DEFAULT_SHOT_COUNT = 10

# One template per relation: how a (head, tail) pair reads as natural language.
DEFAULT_TEMPLATE_PATTERNS = {
    Relation.XNEED: "{HEAD}ためには、{TAIL}必要がある。",
    Relation.XEFFECT: "{HEAD}。結果として、{TAIL}。",
    Relation.XINTENT: "{HEAD}のは、{TAIL}と思ったから。",
    Relation.XREACT: "{HEAD}と、{TAIL}と思う。",
}

# Instruction prefixes for the encoder/decoder fine-tune format, one question
# per relation. Shipped verbatim as defaults; swap via configuration.
DEFAULT_INSTRUCTIONS = {
    Relation.XNEED: "この文の前に起こるイベントは何ですか？",
    Relation.XEFFECT: "このイベントの次に発生する事象は何ですか？",
    Relation.XINTENT: "次の文の発生した理由は何ですか？",
    Relation.XREACT: "次の文の後に感じることは何ですか？",
}

DEFAULT_PRONOUNS = ("あなた", "僕", "私", "彼", "彼女")


class TemplateError(Exception):
    """Template configuration is unusable."""


class PromptError(Exception):
    """Bad inputs to prompt rendering."""


@dataclass(frozen=True)
class ShotTemplate:
    relation: Relation
    pattern: str
    language_tag: str = "ja"

    def __post_init__(self) -> None:
        for marker in (HEAD_MARKER, TAIL_MARKER):
            if self.pattern.count(marker) != 1:
                raise TemplateError(
                    f"pattern must contain {marker} exactly once: {self.pattern!r}"
                )
        if self.pattern.index(HEAD_MARKER) > self.pattern.index(TAIL_MARKER):
            raise TemplateError(f"{HEAD_MARKER} must precede {TAIL_MARKER}: {self.pattern!r}")

    @property
    def prefix(self) -> str:
        return self.pattern.split(HEAD_MARKER, 1)[0]

    @property
    def infix(self) -> str:
        after_head = self.pattern.split(HEAD_MARKER, 1)[1]
        return after_head.split(TAIL_MARKER, 1)[0]

    @property
    def suffix(self) -> str:
        return self.pattern.split(TAIL_MARKER, 1)[1]

    def query_prefix(self, head: str) -> str:
        """The rendered shot truncated at the tail slot."""
        return self.prefix + head + self.infix


def default_templates() -> dict[Relation, ShotTemplate]:
    return {rel: ShotTemplate(rel, pattern) for rel, pattern in DEFAULT_TEMPLATE_PATTERNS.items()}


def load_templates(path: str | Path) -> dict[Relation, ShotTemplate]:
    """Read template records {relation, pattern, language_tag} from a JSONL file."""
    templates: dict[Relation, ShotTemplate] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            relation = Relation.parse(record["relation"])
            templates[relation] = ShotTemplate(
                relation, record["pattern"], record.get("language_tag", "ja")
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise TemplateError(f"{path}:{lineno}: bad template record: {exc}") from None
    missing = [r.value for r in Relation if r not in templates]
    if missing:
        raise TemplateError(f"{path}: missing templates for {', '.join(missing)}")
    return templates


def save_templates(templates: dict[Relation, ShotTemplate], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"relation": t.relation.value, "pattern": t.pattern, "language_tag": t.language_tag},
            ensure_ascii=False,
        )
        for t in templates.values()
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class PromptSpec:
    shots: tuple[str, ...]
    query_prefix: str

    @property
    def shot_count(self) -> int:
        return len(self.shots)

    @property
    def text(self) -> str:
        return "\n".join(list(self.shots) + [self.query_prefix])


def render_shot(template: ShotTemplate, head: str, tail: str) -> str:
    if not head or not tail:
        raise PromptError("head and tail must be non-empty")
    if "\n" in head or "\n" in tail:
        raise PromptError("head and tail must be single-line")
    return template.prefix + head + template.infix + tail + template.suffix


def build_inference_prompt(
    shots: Sequence[Triplet],
    target_head: str,
    template: ShotTemplate,
) -> PromptSpec:
    """Shots rendered in the given order, then a partial line for the target.

    The completion is expected to continue right at the tail slot. Shot
    sampling (uniform, without replacement) is the caller's responsibility.
    """
    for shot in shots:
        if shot.relation is not template.relation:
            raise PromptError(
                f"shot relation {shot.relation.value} does not match template "
                f"{template.relation.value}"
            )
    rendered = tuple(render_shot(template, s.head, s.tail) for s in shots)
    return PromptSpec(shots=rendered, query_prefix=template.query_prefix(target_head))


def build_event_prompt(shots: Sequence[Event]) -> PromptSpec:
    """One event per line; the model continues with a new line = new event."""
    if not shots:
        raise PromptError("event prompts need at least one shot")
    return PromptSpec(shots=tuple(s.text for s in shots), query_prefix="")


def extract_tail(completion: str, template: ShotTemplate, target_head: str) -> str | None:
    """Pattern-match a tail out of the first completion line.

    Returns None for unparseable generations: empty lines, or completions
    that start a fresh shot (detected by the template's head/tail connective
    appearing in the line) instead of continuing at the tail slot.
    """
    line = completion.split("\n", 1)[0].strip()
    if not line:
        return None
    if template.suffix and line.endswith(template.suffix):
        line = line[: -len(template.suffix)]
    if template.infix and template.infix in line:
        return None
    tail = normalize_text(line)
    return tail or None


@dataclass(frozen=True)
class FinetuneExample:
    format: str  # decoder_only | encoder_decoder
    decoder_input: str
    encoder_input: str | None = None

    def __post_init__(self) -> None:
        if self.format == "decoder_only" and self.encoder_input is not None:
            raise PromptError("decoder_only examples carry no encoder_input")

    def record(self) -> dict:
        rec: dict = {"format": self.format}
        if self.encoder_input is not None:
            rec["encoder_input"] = self.encoder_input
        rec["decoder_input"] = self.decoder_input
        return rec


RELATION_TOKENS = tuple(r.value for r in Relation)


def render_finetune_examples(
    triplet: Triplet,
    pronoun_mode: str = "placeholder",
    seed: int = 0,
    pronouns: Sequence[str] = DEFAULT_PRONOUNS,
    instructions: dict[Relation, str] | None = None,
) -> list[FinetuneExample]:
    """Render one decoder-only and one encoder/decoder training example.

    In random_pronoun mode the subject placeholder is replaced everywhere by
    one pronoun drawn deterministically from (seed, triplet id), so head and
    tail always agree and reruns are reproducible.
    """
    if triplet.status not in ("judged_valid", "filter_pass"):
        raise PromptError(f"triplet {triplet.id} is not validated (status {triplet.status})")
    if pronoun_mode not in ("placeholder", "random_pronoun"):
        raise PromptError(f"unknown pronoun mode {pronoun_mode!r}")
    instructions = instructions or DEFAULT_INSTRUCTIONS
    if triplet.relation not in instructions:
        raise PromptError(f"no instruction configured for {triplet.relation.value}")

    head, tail = triplet.head, triplet.tail
    for token in RELATION_TOKENS:
        if token in head or token in tail:
            raise PromptError(f"relation token {token!r} occurs inside triplet text ({triplet.id})")
    if pronoun_mode == "random_pronoun":
        rng = random.Random(f"{seed}:{triplet.id}")
        pronoun = rng.choice(list(pronouns))
        head = head.replace("X", pronoun)
        tail = tail.replace("X", pronoun)

    return [
        FinetuneExample(
            format="decoder_only",
            decoder_input=f"{head} {triplet.relation.value} {tail}",
        ),
        FinetuneExample(
            format="encoder_decoder",
            encoder_input=f"{instructions[triplet.relation]}: {head}",
            decoder_input=tail,
        ),
    ]


def parse_decoder_line(decoder_input: str) -> tuple[str, Relation, str]:
    """Recover (head, relation, tail) from a decoder-only training line."""
    for relation in Relation:
        sep = f" {relation.value} "
        if sep in decoder_input:
            head, tail = decoder_input.split(sep, 1)
            return head, relation, tail
    raise PromptError(f"no relation token found in {decoder_input!r}")


def write_finetune_file(examples: Sequence[FinetuneExample], path: str | Path) -> None:
    lines = [json.dumps(e.record(), ensure_ascii=False) for e in examples]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
