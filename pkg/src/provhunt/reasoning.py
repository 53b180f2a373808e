"""Lifecycle reasoning: stage mapping, streamlining, and the alert predicate.

The lifecycle model is deliberately relaxed: InitialCompromise must precede
everything else and CompleteMission must come last, while the five middle
stages carry no order among themselves. Candidate subgraphs become
CandidateLifecycles by voting stage labels onto nodes from their matched
outgoing edges (with Grubbs-based "relatively high" selection to keep the
label set limited), temporal violations are pruned, and the completeness
predicate decides alert versus suppression.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .stats import select_relatively_high

logger = logging.getLogger(__name__)


class Stage(Enum):
    INITIAL_COMPROMISE = "InitialCompromise"
    ESTABLISH_FOOTHOLD = "EstablishFoothold"
    ESCALATE_PRIVILEGE = "EscalatePrivilege"
    INTERNAL_RECONNAISSANCE = "InternalReconnaissance"
    MOVE_LATERALLY = "MoveLaterally"
    MAINTAIN_PERSISTENCE = "MaintainPersistence"
    COMPLETE_MISSION = "CompleteMission"


MIDDLE_STAGES = frozenset({
    Stage.ESCALATE_PRIVILEGE,
    Stage.INTERNAL_RECONNAISSANCE,
    Stage.MOVE_LATERALLY,
    Stage.MAINTAIN_PERSISTENCE,
})

TACTIC_STAGE: dict[str, Stage] = {
    "Reconnaissance": Stage.INITIAL_COMPROMISE,
    "Initial Access": Stage.INITIAL_COMPROMISE,
    "Execution": Stage.ESTABLISH_FOOTHOLD,
    "Resource Development": Stage.ESTABLISH_FOOTHOLD,
    "Command and Control": Stage.ESTABLISH_FOOTHOLD,
    "Privilege Escalation": Stage.ESCALATE_PRIVILEGE,
    "Credential Access": Stage.ESCALATE_PRIVILEGE,
    "Discovery": Stage.INTERNAL_RECONNAISSANCE,
    "Collection": Stage.INTERNAL_RECONNAISSANCE,
    "Lateral Movement": Stage.MOVE_LATERALLY,
    "Persistence": Stage.MAINTAIN_PERSISTENCE,
    "Defense Evasion": Stage.MAINTAIN_PERSISTENCE,
    "Exfiltration": Stage.COMPLETE_MISSION,
    "Impact": Stage.COMPLETE_MISSION,
}


class UnknownTechniqueError(KeyError):
    pass


class TacticMap:
    """Technique uid -> tactic names, from the bundled snapshot."""

    def __init__(self, techniques: dict[str, dict]):
        self.techniques = techniques

    @classmethod
    def load(cls, path=None) -> "TacticMap":
        if path is None:
            with resources.files("provhunt.data").joinpath(
                "technique_tactics.json"
            ).open("r", encoding="utf-8") as fh:
                raw = json.load(fh)
        else:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        return cls(raw["techniques"])

    def tactics(self, uid: str) -> list[str]:
        entry = self.techniques.get(uid)
        if entry is None and "." in uid:
            # sub-technique not in the snapshot: inherit the parent's tactics
            entry = self.techniques.get(uid.split(".")[0])
        if entry is None:
            raise UnknownTechniqueError(f"technique {uid} not in the tactic table")
        return list(entry["tactics"])

    def name(self, uid: str) -> str:
        entry = self.techniques.get(uid) or self.techniques.get(uid.split(".")[0], {})
        return entry.get("name", uid)


_DEFAULT_TMAP: TacticMap | None = None


def default_tactic_map() -> TacticMap:
    global _DEFAULT_TMAP
    if _DEFAULT_TMAP is None:
        _DEFAULT_TMAP = TacticMap.load()
    return _DEFAULT_TMAP


def technique_to_stages(uid: str, tmap: TacticMap | None = None) -> set[Stage]:
    """Union of the lifecycle stages of every tactic the technique serves."""
    tmap = tmap or default_tactic_map()
    return {TACTIC_STAGE[t] for t in tmap.tactics(uid) if t in TACTIC_STAGE}


# ---------------------------------------------------------------------------
# candidate lifecycles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageEvidence:
    edge_id: int
    technique_uid: str
    score: float
    ts: int
    node_id: str = ""


@dataclass
class CandidateLifecycle:
    nodes: set[str] = field(default_factory=set)
    host: str = ""
    node_stages: dict[str, set[Stage]] = field(default_factory=dict)
    evidence: dict[Stage, list[StageEvidence]] = field(default_factory=dict)

    @property
    def stages(self) -> set[Stage]:
        return {s for s, ev in self.evidence.items() if ev}

    def stage_nodes(self) -> dict[Stage, set[str]]:
        out: dict[Stage, set[str]] = {}
        live = self.stages
        for nid, stages in self.node_stages.items():
            for s in stages:
                if s in live:
                    out.setdefault(s, set()).add(nid)
        for s, evs in self.evidence.items():
            for ev in evs:
                if ev.node_id:
                    out.setdefault(s, set()).add(ev.node_id)
        return out

    def stage_span(self, stage: Stage) -> tuple[int, int] | None:
        evs = self.evidence.get(stage)
        if not evs:
            return None
        ts = [e.ts for e in evs]
        return min(ts), max(ts)


def assign_node_stages(out_edges, tmap: TacticMap | None = None,
                       alpha: float = 0.05) -> set[Stage]:
    """Stage set for one node from its outgoing matched edges.

    Per-stage weight is the summed Sim score of the matches contributing that
    stage; the "relatively high" selector keeps the set limited.
    """
    tmap = tmap or default_tactic_map()
    weights: dict[Stage, float] = {}
    for edge in out_edges:
        for match in edge.matches:
            try:
                stages = technique_to_stages(match.atie_uid, tmap)
            except UnknownTechniqueError:
                logger.warning("skipping unknown technique %s", match.atie_uid)
                continue
            for s in stages:
                weights[s] = weights.get(s, 0.0) + float(match.score)
    if not weights:
        return set()
    return select_relatively_high(sorted(weights.items(), key=lambda p: p[0].value), alpha)


def build_lifecycle(graph, candidate, tmap: TacticMap | None = None,
                    alpha: float = 0.05) -> CandidateLifecycle:
    """Vote stages onto every node of a candidate subgraph and collect the
    per-stage evidence edges."""
    tmap = tmap or default_tactic_map()
    lc = CandidateLifecycle(nodes=set(candidate.nodes), host=candidate.host)
    edge_of = {eid: graph.edges[eid] for eid in candidate.edge_ids}

    # direct assignment from matched outgoing edges
    for nid in sorted(candidate.nodes):
        out = [edge_of[eid] for eid in graph.out_edges.get(nid, ())
               if eid in edge_of and edge_of[eid].matches]
        if not out:
            continue
        stages = assign_node_stages(out, tmap, alpha)
        if stages:
            lc.node_stages[nid] = stages
            for edge in out:
                for match in edge.matches:
                    try:
                        mstages = technique_to_stages(match.atie_uid, tmap)
                    except UnknownTechniqueError:
                        continue
                    for s in mstages & stages:
                        lc.evidence.setdefault(s, []).append(StageEvidence(
                            edge_id=edge.id, technique_uid=match.atie_uid,
                            score=float(match.score), ts=edge.ts, node_id=nid,
                        ))

    # backtrack: unassigned nodes vote from assigned successors, weighted by
    # the successor's anomaly score, until no pass changes anything
    for _ in range(max(1, len(candidate.nodes))):
        changed = False
        for nid in sorted(candidate.nodes):
            if nid in lc.node_stages:
                continue
            weights: dict[Stage, float] = {}
            for eid in graph.out_edges.get(nid, ()):
                if eid not in edge_of:
                    continue
                succ = edge_of[eid].dst
                if succ == nid or succ not in lc.node_stages:
                    continue
                w = max(graph.nodes[succ].score, 1e-9)
                for s in lc.node_stages[succ]:
                    weights[s] = weights.get(s, 0.0) + w
            if weights:
                lc.node_stages[nid] = select_relatively_high(
                    sorted(weights.items(), key=lambda p: p[0].value), alpha
                )
                changed = True
        if not changed:
            break

    for evs in lc.evidence.values():
        evs.sort(key=lambda e: (e.ts, e.edge_id))
    return lc


# ---------------------------------------------------------------------------
# streamlining and the alert predicate
# ---------------------------------------------------------------------------


def streamline(lc: CandidateLifecycle) -> CandidateLifecycle:
    """Prune evidence violating the relaxed temporal order.

    InitialCompromise evidence after the earliest other-stage evidence goes
    first; CompleteMission evidence before the latest remaining other-stage
    evidence goes second; stages left without evidence are dropped. A second
    application is a no-op.
    """
    evidence = {s: list(evs) for s, evs in lc.evidence.items() if evs}

    other_ic = [e.ts for s, evs in evidence.items() if s != Stage.INITIAL_COMPROMISE
                for e in evs]
    if other_ic and Stage.INITIAL_COMPROMISE in evidence:
        earliest_other = min(other_ic)
        evidence[Stage.INITIAL_COMPROMISE] = [
            e for e in evidence[Stage.INITIAL_COMPROMISE] if e.ts <= earliest_other
        ]

    other_cm = [e.ts for s, evs in evidence.items() if s != Stage.COMPLETE_MISSION
                for e in evs]
    if other_cm and Stage.COMPLETE_MISSION in evidence:
        latest_other = max(other_cm)
        evidence[Stage.COMPLETE_MISSION] = [
            e for e in evidence[Stage.COMPLETE_MISSION] if e.ts >= latest_other
        ]

    evidence = {s: evs for s, evs in evidence.items() if evs}
    out = CandidateLifecycle(nodes=set(lc.nodes), host=lc.host,
                             evidence=evidence)
    live = set(evidence)
    for nid, stages in lc.node_stages.items():
        kept = stages & live if stages & live else stages
        out.node_stages[nid] = set(kept)
    return out


@dataclass
class Alert:
    lifecycle: CandidateLifecycle
    rationale: list[str]
    created_ts: int


@dataclass
class Suppression:
    lifecycle: CandidateLifecycle
    rule: str
    rationale: list[str]
    created_ts: int


def raise_alert(lc: CandidateLifecycle, created_ts: int = 0):
    """Alert iff stages cover {IC, EF} plus at least one middle stage;
    CompleteMission stays optional. Returns Alert or Suppression."""
    stages = lc.stages
    rationale = []
    unmet = []
    if Stage.INITIAL_COMPROMISE in stages:
        rationale.append("has Initial Compromise")
    else:
        unmet.append("missing Initial Compromise")
    if Stage.ESTABLISH_FOOTHOLD in stages:
        rationale.append("has Establish Foothold")
    else:
        unmet.append("missing Establish Foothold")
    middle = stages & MIDDLE_STAGES
    if middle:
        rationale.append(
            "has middle stage " + "/".join(sorted(s.value for s in middle))
        )
    else:
        unmet.append(
            "missing middle stage (EscalatePrivilege/InternalReconnaissance/"
            "MoveLaterally/MaintainPersistence)"
        )
    if not unmet:
        return Alert(lifecycle=lc, rationale=rationale, created_ts=created_ts)
    return Suppression(lifecycle=lc, rule=unmet[0], rationale=rationale + unmet,
                       created_ts=created_ts)
