"""Online provenance graph: ingestion, anomaly-score propagation, candidates.

Entities become nodes (processes keyed by pid plus a reuse epoch), events
become edges carrying their technique matches. Matched events seed anomaly
scores on both endpoints; propagate() spreads decayed scores a bounded number
of hops in either direction, and candidates() cuts the scored graph into
connected components worth reasoning about. Eviction against the retention
window keeps an unbounded stream in bounded memory.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field

from .amid import MatchResult
from .lifting import RawEvent

logger = logging.getLogger(__name__)


@dataclass
class ProvNode:
    id: str
    kind: str
    host: str
    value: str
    score: float = 0.0
    is_seed: bool = False
    stage_labels: set = field(default_factory=set)
    first_ts: int = 0
    last_ts: int = 0


@dataclass
class ProvEdge:
    id: int
    src: str
    dst: str
    ts: int
    syscalltype: str
    matches: list[MatchResult] = field(default_factory=list)


@dataclass
class CandidateSubgraph:
    nodes: set[str]
    edge_ids: list[int]
    total_score: float
    host: str = ""


class ProvGraph:
    def __init__(self, window_sec: float = 86400.0, ooo_tolerance_sec: float = 5.0):
        self.window_ns = int(window_sec * 1e9)
        self.ooo_tolerance_ns = int(ooo_tolerance_sec * 1e9)
        self.nodes: dict[str, ProvNode] = {}
        self.edges: dict[int, ProvEdge] = {}
        self.out_edges: dict[str, list[int]] = {}
        self.in_edges: dict[str, list[int]] = {}
        self._edge_seq = 0
        self._edge_order: deque[int] = deque()  # ids in ingest order for eviction
        self._host_last_ts: dict[str, int] = {}
        self._pid_epoch: dict[tuple[str, int], tuple[int, str]] = {}
        self.quarantined: int = 0

    # -- identity ----------------------------------------------------------

    def _process_id(self, host: str, pid: int, name: str) -> str:
        key = (host, pid)
        entry = self._pid_epoch.get(key)
        if entry is None:
            self._pid_epoch[key] = (0, name)
            epoch = 0
        else:
            epoch, known = entry
            if name and known and name != known:
                # pid reuse: same pid, different image
                epoch += 1
                self._pid_epoch[key] = (epoch, name)
        return f"{host}|process|{name}|{pid}|{epoch}"

    def _object_id(self, host: str, kind: str, value: str) -> str:
        if kind == "process" and ":" in value and value.split(":", 1)[0].isdigit():
            pid_s, name = value.split(":", 1)
            return self._process_id(host, int(pid_s), name)
        return f"{host}|{kind}|{value}"

    def _upsert(self, node_id: str, kind: str, host: str, value: str, ts: int) -> ProvNode:
        node = self.nodes.get(node_id)
        if node is None:
            node = ProvNode(id=node_id, kind=kind, host=host, value=value,
                            first_ts=ts, last_ts=ts)
            self.nodes[node_id] = node
            self.out_edges[node_id] = []
            self.in_edges[node_id] = []
        else:
            node.last_ts = max(node.last_ts, ts)
        return node

    # -- ingestion ---------------------------------------------------------

    def ingest(self, event: RawEvent, matches: list[MatchResult] | None = None):
        """Upsert endpoints and append the edge; returns the edge or None if
        the event arrived out of order beyond the tolerance window."""
        matches = matches or []
        last = self._host_last_ts.get(event.host)
        if last is not None and event.ts < last - self.ooo_tolerance_ns:
            self.quarantined += 1
            logger.warning("quarantined out-of-order event on %s: %d < %d",
                           event.host, event.ts, last - self.ooo_tolerance_ns)
            return None
        self._host_last_ts[event.host] = max(last or 0, event.ts)

        src_id = self._process_id(event.host, event.source.pid, event.source.name)
        src = self._upsert(src_id, "process", event.host, event.source.name, event.ts)
        dst_id = self._object_id(event.host, event.destination.kind, event.destination.value)
        dst = self._upsert(dst_id, event.destination.kind, event.host,
                           event.destination.value, event.ts)

        self._edge_seq += 1
        edge = ProvEdge(id=self._edge_seq, src=src_id, dst=dst_id, ts=event.ts,
                        syscalltype=event.syscalltype, matches=list(matches))
        self.edges[edge.id] = edge
        self.out_edges[src_id].append(edge.id)
        self.in_edges[dst_id].append(edge.id)
        self._edge_order.append(edge.id)

        if matches:
            best = max(m.score for m in matches)
            for node in (src, dst):
                node.is_seed = True
                node.score = max(node.score, float(best))
        return edge

    # -- scoring -----------------------------------------------------------

    def seeds(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.is_seed]

    def neighbors(self, node_id: str):
        for eid in self.out_edges.get(node_id, ()):
            yield self.edges[eid].dst
        for eid in self.in_edges.get(node_id, ()):
            yield self.edges[eid].src

    def propagate(self, decay: float = 0.5, hops: int = 3) -> None:
        """Spread decay^d * seed score along up to `hops` hops (both edge
        directions); node scores only ever rise (max-combining)."""
        if not 0.0 < decay < 1.0:
            raise ValueError(f"decay must be in (0, 1), got {decay}")
        if hops < 0:
            raise ValueError("hops must be >= 0")
        for seed_id in self.seeds():
            seed_score = self.nodes[seed_id].score
            if seed_score <= 0.0 or hops == 0:
                continue
            depth = {seed_id: 0}
            frontier = deque([seed_id])
            while frontier:
                cur = frontier.popleft()
                d = depth[cur]
                if d >= hops:
                    continue
                for nxt in self.neighbors(cur):
                    if nxt in depth:
                        continue
                    depth[nxt] = d + 1
                    contribution = seed_score * (decay ** (d + 1))
                    node = self.nodes[nxt]
                    if contribution > node.score:
                        node.score = contribution
                    frontier.append(nxt)

    def candidates(self, floor: float) -> list[CandidateSubgraph]:
        """Connected components over nodes scoring >= floor, best first."""
        qualifying = {nid for nid, n in self.nodes.items() if n.score >= floor}
        parent: dict[str, str] = {nid: nid for nid in qualifying}

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a: str, b: str) -> None:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[rb] = ra

        comp_edges: dict[str, list[int]] = {}
        for eid, edge in self.edges.items():
            if edge.src in qualifying and edge.dst in qualifying:
                union(edge.src, edge.dst)
        for eid, edge in self.edges.items():
            if edge.src in qualifying and edge.dst in qualifying:
                comp_edges.setdefault(find(edge.src), []).append(eid)

        groups: dict[str, set[str]] = {}
        for nid in qualifying:
            groups.setdefault(find(nid), set()).add(nid)
        out = []
        for root, members in groups.items():
            total = sum(self.nodes[m].score for m in members)
            host = self.nodes[min(members)].host
            out.append(CandidateSubgraph(
                nodes=members, edge_ids=sorted(comp_edges.get(root, [])),
                total_score=total, host=host,
            ))
        out.sort(key=lambda c: (-c.total_score, min(c.nodes)))
        return out

    # -- retention ---------------------------------------------------------

    def evict(self, now_ts: int, floor: float = 0.0) -> int:
        """Drop edges older than the window, then nodes left with no edges
        and a score below the floor. Returns the number of edges dropped."""
        horizon = now_ts - self.window_ns
        dropped = 0
        while self._edge_order:
            eid = self._edge_order[0]
            edge = self.edges.get(eid)
            if edge is None:
                self._edge_order.popleft()
                continue
            if edge.ts >= horizon:
                break
            self._edge_order.popleft()
            del self.edges[eid]
            self.out_edges[edge.src].remove(eid)
            self.in_edges[edge.dst].remove(eid)
            dropped += 1
        if dropped:
            dead = [
                nid for nid, n in self.nodes.items()
                if not self.out_edges[nid] and not self.in_edges[nid] and n.score < floor
            ]
            for nid in dead:
                del self.nodes[nid]
                del self.out_edges[nid]
                del self.in_edges[nid]
        return dropped

    # -- exchange format ---------------------------------------------------

    def export_subgraph(self, nodes: set[str] | None = None) -> dict:
        """Node-link JSON structure for inspection / re-import."""
        node_ids = sorted(nodes) if nodes is not None else sorted(self.nodes)
        chosen = set(node_ids)
        return {
            "directed": True,
            "nodes": [
                {
                    "id": nid,
                    "kind": self.nodes[nid].kind,
                    "host": self.nodes[nid].host,
                    "value": self.nodes[nid].value,
                    "score": self.nodes[nid].score,
                    "seed": self.nodes[nid].is_seed,
                    "stages": sorted(s.value if hasattr(s, "value") else str(s)
                                     for s in self.nodes[nid].stage_labels),
                }
                for nid in node_ids
            ],
            "links": [
                {
                    "id": e.id,
                    "source": e.src,
                    "target": e.dst,
                    "ts": e.ts,
                    "syscall": e.syscalltype,
                    "techniques": sorted({m.atie_uid for m in e.matches}),
                }
                for e in sorted(self.edges.values(), key=lambda e: e.id)
                if e.src in chosen and e.dst in chosen
            ],
        }

    @staticmethod
    def import_subgraph(data: dict) -> "ProvGraph":
        g = ProvGraph()
        for n in data["nodes"]:
            node = ProvNode(id=n["id"], kind=n["kind"], host=n.get("host", ""),
                            value=n.get("value", ""), score=n.get("score", 0.0),
                            is_seed=n.get("seed", False))
            g.nodes[node.id] = node
            g.out_edges[node.id] = []
            g.in_edges[node.id] = []
        for l in data["links"]:
            eid = int(l["id"])
            edge = ProvEdge(id=eid, src=l["source"], dst=l["target"],
                            ts=int(l["ts"]), syscalltype=l.get("syscall", ""),
                            matches=[MatchResult(atie_uid=uid, score=0)
                                     for uid in l.get("techniques", [])])
            g.edges[eid] = edge
            g.out_edges[edge.src].append(eid)
            g.in_edges[edge.dst].append(eid)
            g._edge_order.append(eid)
            g._edge_seq = max(g._edge_seq, eid)
        return g

    def export_json(self, nodes: set[str] | None = None) -> str:
        return json.dumps(self.export_subgraph(nodes), sort_keys=True)
