"""The online detection pipeline: lift -> match -> graph -> reason -> report.

Events stream through one pipeline instance per run. Matching results are
memoized on the lifted field phrases (system workloads repeat heavily), the
provenance graph evicts against the retention window, and candidate
evaluation happens at window boundaries plus once at end of stream, so an
unbounded stream runs in bounded memory.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

from .amid import AmidStore, MatchResult, prov_q
from .config import EngineConfig
from .embedding import VectorTable
from .graph import ProvGraph
from .lifting import LiftedEvent, LiftingRules, ObjectDesc, ProcessDesc, RawEvent, lift_event
from .reasoning import (
    Alert,
    CandidateLifecycle,
    Suppression,
    TacticMap,
    build_lifecycle,
    raise_alert,
    streamline,
)
from .report import AptReport, build_report

logger = logging.getLogger(__name__)


class EventParseError(ValueError):
    pass


def parse_event(record: dict) -> RawEvent:
    """One line of the canonical event schema -> RawEvent."""
    try:
        src = record["src"]
        dst = record["dst"]
        return RawEvent(
            ts=int(record["ts"]),
            host=str(record["host"]),
            source=ProcessDesc(
                pid=int(src.get("pid", 0)),
                name=str(src.get("name", "")),
                image=str(src.get("image", "")),
            ),
            destination=ObjectDesc(kind=str(dst["kind"]), value=str(dst["value"])),
            syscalltype=str(record.get("syscall", "")),
            commandline=str(record.get("cmdline", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise EventParseError(f"bad event record: {exc}") from exc


class _LRU:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.data: OrderedDict = OrderedDict()

    def get(self, key):
        try:
            self.data.move_to_end(key)
            return self.data[key]
        except KeyError:
            return None

    def put(self, key, value):
        self.data[key] = value
        self.data.move_to_end(key)
        if len(self.data) > self.capacity:
            self.data.popitem(last=False)


def lifecycle_record(lc: CandidateLifecycle) -> dict:
    return {
        "host": lc.host,
        "stages": sorted(s.value for s in lc.stages),
        "nodes": sorted(lc.nodes),
        "stage_nodes": {
            s.value: sorted(nodes) for s, nodes in sorted(
                lc.stage_nodes().items(), key=lambda kv: kv[0].value
            )
        },
        "evidence": {
            s.value: [
                {
                    "edge_id": ev.edge_id,
                    "technique": ev.technique_uid,
                    "score": ev.score,
                    "ts": ev.ts,
                    "node": ev.node_id,
                }
                for ev in evs
            ]
            for s, evs in sorted(lc.evidence.items(), key=lambda kv: kv[0].value)
        },
    }


@dataclass
class PipelineResult:
    alerts: list[dict] = field(default_factory=list)
    suppressions: list[dict] = field(default_factory=list)
    reports: list[AptReport] = field(default_factory=list)
    events_in: int = 0
    events_quarantined: int = 0
    events_matched: int = 0


class DetectionPipeline:
    def __init__(self, store: AmidStore, table: VectorTable, config: EngineConfig,
                 tmap: TacticMap | None = None, rules: LiftingRules | None = None,
                 dns_map: dict[str, str] | None = None, report_client=None,
                 cache_size: int = 65536):
        if store.theta_q is None and config.theta_q is None:
            raise ValueError("store is uncalibrated and config carries no theta_q override")
        if config.theta_q is not None:
            store.theta_q = float(config.theta_q)
        self.store = store
        self.table = table
        self.config = config
        self.tmap = tmap
        self.rules = rules
        self.dns_map = dns_map or {}
        self.report_client = report_client
        self.graph = ProvGraph(window_sec=config.window_sec,
                               ooo_tolerance_sec=config.ooo_tolerance_sec)
        self.result = PipelineResult()
        self._match_cache = _LRU(cache_size)
        self._flush_interval_ns = int(config.resolved_flush_interval() * 1e9)
        self._last_flush_ts: int | None = None
        self._last_ts: int = 0
        self._emitted: set[str] = set()

    # -- matching with memoization ------------------------------------------

    def _match(self, lifted: LiftedEvent) -> list[MatchResult]:
        key = tuple(sorted(
            (fieldname, tuple(phrase)) for fieldname, phrase in lifted.lifted.items()
        ))
        cached = self._match_cache.get(key)
        if cached is None:
            cached = prov_q(lifted, self.store, self.table)
            self._match_cache.put(key, cached)
        return cached

    # -- stream interface -----------------------------------------------------

    def process_event(self, event: RawEvent) -> None:
        self.result.events_in += 1
        self._last_ts = max(self._last_ts, event.ts)
        lifted = lift_event(event, self.dns_map, self.rules)
        matches = self._match(lifted)
        if matches:
            self.result.events_matched += 1
        edge = self.graph.ingest(event, matches)
        if edge is None:
            self.result.events_quarantined += 1
            return
        if self._last_flush_ts is None:
            self._last_flush_ts = event.ts
        elif event.ts - self._last_flush_ts >= self._flush_interval_ns:
            self.flush(event.ts)
            self._last_flush_ts = event.ts

    def process_record(self, record: dict) -> None:
        self.process_event(parse_event(record))

    def finish(self) -> PipelineResult:
        self.flush(self._last_ts)
        return self.result

    # -- window resolution ----------------------------------------------------

    def _dedup_key(self, kind: str, lc: CandidateLifecycle) -> str:
        payload = json.dumps({
            "kind": kind,
            "host": lc.host,
            "stages": sorted(s.value for s in lc.stages),
            "edges": sorted(
                ev.edge_id for evs in lc.evidence.values() for ev in evs
            ),
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:24]

    def flush(self, now_ts: int) -> None:
        if not self.graph.seeds():
            self.graph.evict(now_ts, floor=0.0)
            return
        self.graph.propagate(decay=self.config.decay, hops=self.config.hops)
        floor = self.config.resolve_floor(self.store.theta_q)
        for candidate in self.graph.candidates(floor):
            lc = streamline(build_lifecycle(self.graph, candidate, self.tmap,
                                            self.config.alpha))
            if not lc.stages:
                continue
            outcome = raise_alert(lc, created_ts=now_ts)
            if isinstance(outcome, Alert):
                key = self._dedup_key("alert", lc)
                if key in self._emitted:
                    continue
                self._emitted.add(key)
                for nid in lc.nodes:
                    node = self.graph.nodes.get(nid)
                    if node is not None:
                        node.stage_labels = lc.node_stages.get(nid, set())
                report = build_report(outcome, self.graph, client=self.report_client)
                record = {
                    "type": "alert",
                    "key": key,
                    "created_ts": now_ts,
                    "rationale": outcome.rationale,
                    "lifecycle": lifecycle_record(lc),
                    "subgraph": self.graph.export_subgraph(lc.nodes),
                }
                self.result.alerts.append(record)
                self.result.reports.append(report)
                logger.info("alert raised on %s: stages %s", lc.host,
                            record["lifecycle"]["stages"])
            elif isinstance(outcome, Suppression):
                key = self._dedup_key("suppression", lc)
                if key in self._emitted:
                    continue
                self._emitted.add(key)
                self.result.suppressions.append({
                    "type": "suppression",
                    "key": key,
                    "created_ts": now_ts,
                    "rule": outcome.rule,
                    "rationale": outcome.rationale,
                    "lifecycle": lifecycle_record(lc),
                })
        self.graph.evict(now_ts, floor=floor)
