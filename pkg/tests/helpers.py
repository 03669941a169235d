"""Shared fixture builders for the test suite."""

import random

from phalm.graph import KnowledgeGraph, Relation

_NOUNS = ["顔", "水", "本", "朝食", "傘", "部屋", "鍵", "靴", "歌", "手紙",
          "荷物", "窓", "机", "服", "弁当", "写真", "切符", "財布", "料理", "宿題"]
_VERBS = ["洗う", "出す", "読む", "作る", "持つ", "開ける", "買う", "歌う", "書く",
          "撮る", "運ぶ", "探す", "選ぶ", "届ける", "片付ける", "食べる", "飾る", "直す"]
_FEELINGS = ["嬉しい", "楽しい", "すっきりする", "眠くなる", "安心する", "わくわくする",
             "ほっとする", "誇らしい", "落ち着く", "少し緊張する"]


def build_seed_graph(rng: random.Random, n_triplets: int = 500,
                     name: str = "seed", status: str = "judged_valid") -> KnowledgeGraph:
    """A judged seed graph whose heads are shared across all four relations.

    Shared heads guarantee that inverse-pair (type 3) negative pools are
    non-empty, mirroring how real collection attaches every relation to
    every collected event.
    """
    graph = KnowledgeGraph(name=name)
    n_heads = max(4, n_triplets // 8)
    heads = [f"Xが{rng.choice(_NOUNS)}{i}を{rng.choice(_VERBS)}" for i in range(n_heads)]
    with graph.batch():
        added = 0
        i = 0
        while added < n_triplets:
            # Head-major so every head carries all four relations, keeping
            # inverse-pair pools populated.
            head = heads[(i // 4) % len(heads)]
            relation = list(Relation)[i % 4]
            i += 1
            if relation.tail_kind == "event":
                tail = f"Xが{rng.choice(_NOUNS)}を{rng.choice(_VERBS)}{rng.randint(0, 9999)}"
            else:
                tail = f"{rng.choice(_FEELINGS)}{rng.randint(0, 9999)}"
            outcome = graph.add_triplet(head, relation, tail, "crowd", status="raw")
            if outcome.inserted:
                outcome.triplet.status = status
                added += 1
    return graph
