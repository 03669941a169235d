"""Reading the training-set export: one JSON record per line with
{head, relation, tail, label, negative_type?, origin_ids}.

The trainer talks to the pipeline only through this file format and the
/score wire contract, so the template patterns used to render classifier
inputs are its own configuration data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

RELATIONS = ("xNeed", "xEffect", "xIntent", "xReact")

# How a (head, tail) pair reads as one natural-language line, per relation.
# Must mirror the prompt templates the pipeline generated with.
DEFAULT_TEMPLATE_PATTERNS = {
    "xNeed": "{HEAD}ためには、{TAIL}必要がある。",
    "xEffect": "{HEAD}。結果として、{TAIL}。",
    "xIntent": "{HEAD}のは、{TAIL}と思ったから。",
    "xReact": "{HEAD}と、{TAIL}と思う。",
}


class DataError(Exception):
    pass


@dataclass(frozen=True)
class TrainingExample:
    head: str
    relation: str
    tail: str
    label: str  # valid | invalid
    negative_type: str | None = None


def load_examples(path: str | Path) -> list[TrainingExample]:
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            example = TrainingExample(
                head=rec["head"],
                relation=rec["relation"],
                tail=rec["tail"],
                label=rec["label"],
                negative_type=rec.get("negative_type"),
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"{path}:{lineno}: bad record: {exc}") from None
        if example.relation not in RELATIONS:
            raise DataError(f"{path}:{lineno}: unknown relation {example.relation!r}")
        if example.label not in ("valid", "invalid"):
            raise DataError(f"{path}:{lineno}: unknown label {example.label!r}")
        examples.append(example)
    if not examples:
        raise DataError(f"{path}: no training records")
    return examples


def load_template_patterns(path: str | Path | None) -> dict[str, str]:
    if path is None:
        return dict(DEFAULT_TEMPLATE_PATTERNS)
    patterns = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            patterns[rec["relation"]] = rec["pattern"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"{path}:{lineno}: bad template record: {exc}") from None
    missing = [r for r in RELATIONS if r not in patterns]
    if missing:
        raise DataError(f"{path}: missing templates for {', '.join(missing)}")
    return patterns


def render_pair(patterns: dict[str, str], head: str, relation: str, tail: str) -> str:
    """Classifier input: the pair rendered through the relation's template,
    which is what encodes the relation semantics being judged."""
    try:
        pattern = patterns[relation]
    except KeyError:
        raise DataError(f"unknown relation {relation!r}") from None
    return pattern.replace("{HEAD}", head).replace("{TAIL}", tail)
