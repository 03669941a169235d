"""phalm: build a commonsense event knowledge graph from scratch by prompting
crowdworkers and a text-completion backend, with syntactic and trained
filtering plus a full evaluation harness."""

from .graph import Event, KnowledgeGraph, Relation, Triplet, load_graph, normalize_text, save_graph

__all__ = [
    "Event",
    "KnowledgeGraph",
    "Relation",
    "Triplet",
    "load_graph",
    "normalize_text",
    "save_graph",
]

__version__ = "0.1.0"
