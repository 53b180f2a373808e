"""Graph- and node-level precision/recall over reported alert graphs.

A reported graph is a true positive when it contains at least one
ground-truth attack node; node counts run over the distinct nodes of all
reported graphs. Recall needs to know what was missed, so the ground truth
groups attack nodes into campaigns: a campaign left untouched by every
reported graph counts as a graph-level false negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


class ReconciliationError(ValueError):
    """Reported node ids missing from the ground-truth labeling."""


@dataclass
class EvalMetrics:
    gtp: int = 0
    gfp: int = 0
    gfn: int = 0
    ntp: int = 0
    nfp: int = 0
    nfn: int = 0

    @staticmethod
    def _ratio(num: int, den: int):
        return num / den if den > 0 else None

    @property
    def graph_precision(self):
        return self._ratio(self.gtp, self.gtp + self.gfp)

    @property
    def graph_recall(self):
        return self._ratio(self.gtp, self.gtp + self.gfn)

    @property
    def node_precision(self):
        return self._ratio(self.ntp, self.ntp + self.nfp)

    @property
    def node_recall(self):
        return self._ratio(self.ntp, self.ntp + self.nfn)

    def to_dict(self) -> dict:
        return {
            "gtp": self.gtp, "gfp": self.gfp, "gfn": self.gfn,
            "ntp": self.ntp, "nfp": self.nfp, "nfn": self.nfn,
            "graph_precision": self.graph_precision,
            "graph_recall": self.graph_recall,
            "node_precision": self.node_precision,
            "node_recall": self.node_recall,
        }


def load_ground_truth(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        gt = json.load(fh)
    if "nodes" not in gt:
        raise ValueError("ground truth needs a 'nodes' labeling")
    gt.setdefault("campaigns", {})
    return gt


def evaluate(reported_graphs, ground_truth: dict) -> EvalMetrics:
    """reported_graphs: iterable of node-id collections, one per alert."""
    labels: dict[str, str] = ground_truth["nodes"]
    campaigns: dict[str, list[str]] = ground_truth.get("campaigns", {})

    graphs = [set(g) for g in reported_graphs]
    unknown = sorted({n for g in graphs for n in g if n not in labels})
    if unknown:
        raise ReconciliationError(
            f"{len(unknown)} reported node ids lack ground-truth labels: "
            + ", ".join(unknown[:10])
            + ("..." if len(unknown) > 10 else "")
        )

    m = EvalMetrics()
    reported_nodes: set[str] = set()
    for g in graphs:
        if any(labels[n] == "attack" for n in g):
            m.gtp += 1
        else:
            m.gfp += 1
        reported_nodes.update(g)

    covered = set()
    for name, members in campaigns.items():
        if any(n in reported_nodes for n in members):
            covered.add(name)
    m.gfn = len(campaigns) - len(covered)

    attack_nodes = {n for n, lab in labels.items() if lab == "attack"}
    m.ntp = len(reported_nodes & attack_nodes)
    m.nfp = len(reported_nodes - attack_nodes)
    m.nfn = len(attack_nodes - reported_nodes)
    return m
