"""Scripted annotators: deterministic stand-ins for crowdworkers.

Responses are pure functions of (seed, task content, worker), so a pipeline
run replays identically. The bundled event-response fixture deliberately
contains duplicates and a few syntactically bad sentences to exercise the
ingestion gates downstream.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .crowd import (
    JUDGE_CONTINGENCY,
    JUDGE_TIME_INTERVAL,
    JUDGE_VALIDITY,
    WRITE_EVENT,
    WRITE_INFERENCE,
    CrowdError,
    CrowdStore,
)
from .graph import Relation

# 20 write_event responses: 17 unique after normalization (3 duplicates,
# two of them sneaky whitespace/period variants).
DEFAULT_EVENT_RESPONSES = [
    "Xが顔を洗う",
    "Xが朝食を作る",
    "Xが電車に乗る",
    "Xが本を読む",
    "Xが傘を持って出かける",
    "Xが部屋を片付ける",
    "Xが買い物に行く",
    "Xが顔を洗う。",  # duplicate of the first after normalization
    "Xが手紙を書く",
    "Xが犬の散歩をする",
    "Xが歌をうたう",
    "Xが写真を撮る",
    "Xが朝食を作る ",  # duplicate
    "Xが弁当を持って出かける",
    "Xが窓を開ける",
    "Xが靴を磨く",
    "Xが買い物に行く",  # duplicate
    "Xが荷物を運ぶ",
    "Xが宿題を終わらせる",
    "Xが花に水をやる",
]

# Bootstrap example pools shown in the first write tasks, before any data
# exists. Deployment content; swap via configuration.
BOOTSTRAP_EVENT_EXAMPLES = [
    "Xが顔を洗う", "Xが朝食を食べる", "Xが電車に乗る", "Xが本を読む", "Xが買い物に行く",
    "Xが部屋を掃除する", "Xが音楽を聴く", "Xが友達と話す", "Xが宿題をする", "Xが散歩に出かける",
    "Xが料理を作る", "Xが手紙を書く",
]

BOOTSTRAP_INFERENCE_PAIRS: dict[Relation, list[tuple[str, str]]] = {
    Relation.XNEED: [
        ("Xが顔を洗う", "Xが水道で水を出す"), ("Xが朝食を食べる", "Xが朝食を作る"),
        ("Xが電車に乗る", "Xが駅へ行く"), ("Xが本を読む", "Xが本を開く"),
        ("Xが買い物に行く", "Xが財布を持つ"), ("Xが部屋を掃除する", "Xが掃除機を出す"),
        ("Xが音楽を聴く", "Xがイヤホンをつける"), ("Xが友達と話す", "Xが友達に会う"),
        ("Xが宿題をする", "Xが机に向かう"), ("Xが散歩に出かける", "Xが靴を履く"),
    ],
    Relation.XEFFECT: [
        ("Xが顔を洗う", "Xがタオルで顔を拭く"), ("Xが朝食を食べる", "Xが食器を洗う"),
        ("Xが電車に乗る", "Xが座席に座る"), ("Xが本を読む", "Xが眠くなる"),
        ("Xが買い物に行く", "Xが袋を持って帰る"), ("Xが部屋を掃除する", "Xがごみを出す"),
        ("Xが音楽を聴く", "Xが歌を口ずさむ"), ("Xが友達と話す", "Xが約束をする"),
        ("Xが宿題をする", "Xがノートを閉じる"), ("Xが散歩に出かける", "Xが公園まで歩く"),
    ],
    Relation.XINTENT: [
        ("Xが顔を洗う", "すっきりしたい"), ("Xが朝食を食べる", "お腹を満たしたい"),
        ("Xが電車に乗る", "早く着きたい"), ("Xが本を読む", "物語を楽しみたい"),
        ("Xが買い物に行く", "必要な物を揃えたい"), ("Xが部屋を掃除する", "きれいにしたい"),
        ("Xが音楽を聴く", "気分を変えたい"), ("Xが友達と話す", "近況を知りたい"),
        ("Xが宿題をする", "早く終わらせたい"), ("Xが散歩に出かける", "体を動かしたい"),
    ],
    Relation.XREACT: [
        ("Xが顔を洗う", "さっぱりする"), ("Xが朝食を食べる", "満足する"),
        ("Xが電車に乗る", "ほっとする"), ("Xが本を読む", "心が落ち着く"),
        ("Xが買い物に行く", "気分が上がる"), ("Xが部屋を掃除する", "すがすがしい"),
        ("Xが音楽を聴く", "楽しくなる"), ("Xが友達と話す", "嬉しくなる"),
        ("Xが宿題をする", "安心する"), ("Xが散歩に出かける", "気持ちが軽くなる"),
    ],
}

_TAIL_NOUNS = ("財布", "水", "鍵", "地図", "時間", "メモ", "道具", "切符", "袋", "予定")
_TAIL_VERBS = ("用意する", "確かめる", "手に取る", "整える", "決める", "見つける",
               "準備する", "選ぶ", "持ち歩く", "思い出す")
_TAIL_FEELINGS = ("嬉しい", "楽しみだ", "落ち着く", "ほっとする", "少し緊張する",
                  "すっきりする", "わくわくする", "誇らしい", "安心する", "清々しい")


def stable_int(*parts) -> int:
    joined = "\x1f".join(str(p) for p in parts)
    return int(hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16], 16)


@dataclass
class ScriptedAnnotatorPool:
    """Drives a crowd store the way a pool of workers would, deterministically."""

    seed: int = 0
    workers: int = 5
    accept_rate: float = 0.85
    event_responses: list[str] | None = None
    _event_queue: list[str] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        responses = self.event_responses if self.event_responses is not None \
            else DEFAULT_EVENT_RESPONSES
        self._event_queue = list(responses)

    def _worker_ids(self, task_index: int, count: int) -> list[str]:
        return [f"w{(task_index + k) % self.workers + 1:02d}" for k in range(count)]

    def _write_event_value(self, task, worker: str) -> str:
        if self._event_queue:
            return self._event_queue.pop(0)
        rng = random.Random(stable_int(self.seed, "event", task.id, worker))
        return f"Xが{rng.choice(_TAIL_NOUNS)}を{rng.choice(_TAIL_VERBS)}"

    def _write_inference_value(self, task, worker: str) -> str:
        head = task.target["head"]
        relation = Relation.parse(task.relation)
        rng = random.Random(stable_int(self.seed, "inference", head, task.relation, worker))
        if relation.tail_kind == "event":
            tail = f"Xが{rng.choice(_TAIL_NOUNS)}を{rng.choice(_TAIL_VERBS)}"
            if rng.random() < 0.1:
                tail = f"Xが{rng.choice(_TAIL_NOUNS)}を忘れた"  # past tense: gate fodder
        else:
            tail = rng.choice(_TAIL_FEELINGS)
        return tail

    def _judge_value(self, task, worker: str):
        target = task.target
        key = (target.get("head", ""), target.get("relation", ""), target.get("tail", ""))
        h = stable_int(self.seed, task.kind, *key, worker)
        if task.kind == JUDGE_VALIDITY:
            return "accept" if (h % 1000) < self.accept_rate * 1000 else "reject"
        if task.kind == JUDGE_CONTINGENCY:
            return h % 3
        if task.kind == JUDGE_TIME_INTERVAL:
            return h % 5
        raise CrowdError(f"scripted annotators cannot answer {task.kind}")

    def respond(self, task, worker: str):
        if task.kind == WRITE_EVENT:
            return self._write_event_value(task, worker)
        if task.kind == WRITE_INFERENCE:
            return self._write_inference_value(task, worker)
        return self._judge_value(task, worker)

    def work_through(self, store: CrowdStore, kind: str) -> int:
        """Complete every open task of the kind; returns judgments submitted."""
        submitted = 0
        open_tasks = [t for t in store.tasks(kind) if not t.complete]
        for index, task in enumerate(open_tasks):
            already = {j.worker_id for j in store.judgments_for(task.id)}
            needed = task.required_judgments - len(already)
            candidates = [w for w in self._worker_ids(index, self.workers) if w not in already]
            if len(candidates) < needed:
                raise CrowdError(f"not enough distinct workers for task {task.id}")
            for worker in candidates[:needed]:
                result = store.submit_judgment(task.id, worker, self.respond(task, worker))
                if result in ("duplicate_worker", "domain_error"):
                    raise CrowdError(f"scripted annotator misbehaved on {task.id}: {result}")
                submitted += 1
        return submitted
