"""The CTI knowledge base: ATIEs of gIoCs, its interchange format, and ProvQ.

A store is built once from (aties, vector table), after which it is immutable
and safe to share across query workers. Matching follows the two-route hit
rule: an event field hits a gIoC when its embedding is cosine-close either to
the gIoC's full subject+verb+object phrase or to the component matching the
field's role (source<->subject, syscalltype/commandline<->verb,
destination<->object). Sim(event, atie) is the per-field hit count summed
over fields, and an ATIE matches when that score exceeds theta_q.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .embedding import VectorTable, embed_phrase
from .index import ClusterIndex
from .lifting import LiftedEvent
from .stats import grubbs_one_sided

logger = logging.getLogger(__name__)

TECHNIQUE_ID = re.compile(r"^T\d{4}(\.\d{3})?$")

ROLE_FOR_FIELD = {
    "source": "subject",
    "destination": "object",
    "syscalltype": "verb",
    "commandline": "verb",
}

CHANNELS = ("full", "subject", "verb", "object")


class AmidSchemaError(ValueError):
    """Interchange file violates the AMID schema."""


class CalibrationError(ValueError):
    """Threshold calibration could not run (too few scores)."""


class UncalibratedError(RuntimeError):
    """Query attempted before theta_q was calibrated or configured."""


@dataclass(frozen=True)
class GIoC:
    subject: tuple[str, ...]
    verb: tuple[str, ...]
    object_: tuple[str, ...]
    source_sentence: str = ""
    technique_uid: str = ""
    origin: str = "extracted_svo"  # extracted_svo | converted_ioc

    def __post_init__(self):
        for name, part in (("subject", self.subject), ("verb", self.verb),
                           ("object", self.object_)):
            if not part:
                raise AmidSchemaError(f"gIoC {name} must be non-empty")
        if self.technique_uid and not TECHNIQUE_ID.match(self.technique_uid):
            raise AmidSchemaError(f"bad technique id {self.technique_uid!r}")

    def phrase(self) -> list[str]:
        return list(self.subject) + list(self.verb) + list(self.object_)

    def component(self, channel: str) -> list[str]:
        if channel == "subject":
            return list(self.subject)
        if channel == "verb":
            return list(self.verb)
        if channel == "object":
            return list(self.object_)
        return self.phrase()


def gioc_from_dict(d: dict, technique_uid: str) -> GIoC:
    def _tokens(v):
        if isinstance(v, str):
            return tuple(v.split())
        return tuple(v)

    return GIoC(
        subject=_tokens(d["subject"]),
        verb=_tokens(d["verb"]),
        object_=_tokens(d["object"]),
        source_sentence=d.get("source_sentence", ""),
        technique_uid=technique_uid,
        origin=d.get("origin", "extracted_svo"),
    )


def gioc_to_dict(g: GIoC) -> dict:
    return {
        "subject": " ".join(g.subject),
        "verb": " ".join(g.verb),
        "object": " ".join(g.object_),
        "source_sentence": g.source_sentence,
        "origin": g.origin,
    }


@dataclass
class ATIE:
    uid: str
    des: str = ""
    list_cti: list[str] = field(default_factory=list)
    list_gioc: list[GIoC] = field(default_factory=list)

    def __post_init__(self):
        if not TECHNIQUE_ID.match(self.uid):
            raise AmidSchemaError(f"bad technique id {self.uid!r}")
        fixed = []
        for g in self.list_gioc:
            if g.technique_uid and g.technique_uid != self.uid:
                raise AmidSchemaError(
                    f"gIoC tagged {g.technique_uid} inside ATIE {self.uid}"
                )
            if not g.technique_uid:
                g = GIoC(g.subject, g.verb, g.object_, g.source_sentence,
                         self.uid, g.origin)
            fixed.append(g)
        self.list_gioc = fixed


@dataclass
class MatchResult:
    atie_uid: str
    score: int
    field_hits: dict[str, list[tuple[str, float]]] = field(default_factory=dict)


@dataclass
class AmidStore:
    aties: list[ATIE]
    theta_q: float | None = None
    theta_hit: float = 0.75
    alpha: float = 0.05
    search_mode: str = "widened"
    embedding_ref: str = ""
    calibration: dict = field(default_factory=dict)
    channels: dict[str, ClusterIndex] = field(default_factory=dict)
    giocs: list[GIoC] = field(default_factory=list)  # flat, in file order
    gioc_refs: list[str] = field(default_factory=list)  # "uid#ordinal"
    _ref_uid: dict[str, str] = field(default_factory=dict)

    @classmethod
    def build(cls, aties: list[ATIE], table: VectorTable, theta_q=None,
              theta_hit: float = 0.75, alpha: float = 0.05,
              search_mode: str = "widened", bandwidth="median") -> "AmidStore":
        if table is None:
            raise AmidSchemaError("an embedding table is required to build a store")
        seen = set()
        for a in aties:
            if a.uid in seen:
                raise AmidSchemaError(f"duplicate uid {a.uid}")
            seen.add(a.uid)
        store = cls(
            aties=list(aties), theta_q=theta_q, theta_hit=theta_hit,
            alpha=alpha, search_mode=search_mode,
            embedding_ref=table.source_sha[:16],
        )
        for a in store.aties:
            for i, g in enumerate(a.list_gioc):
                ref = f"{a.uid}#{i}"
                store.giocs.append(g)
                store.gioc_refs.append(ref)
                store._ref_uid[ref] = a.uid
        n = len(store.giocs)
        dim = table.dim
        for channel in CHANNELS:
            mat = np.zeros((n, dim), dtype=np.float64)
            for row, g in enumerate(store.giocs):
                toks = g.component(channel)
                if toks:
                    mat[row] = embed_phrase(toks, table)
            store.channels[channel] = ClusterIndex.build(
                mat, store.gioc_refs, bandwidth=bandwidth
            )
        return store

    def uid_of(self, ref: str) -> str:
        return self._ref_uid[ref]

    def atie(self, uid: str) -> ATIE:
        for a in self.aties:
            if a.uid == uid:
                return a
        raise KeyError(uid)


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------


def _field_hits(query_vec, role: str, store: AmidStore) -> dict[str, float]:
    """gIoC refs hit by one query vector: full-phrase route OR role route."""
    hits: dict[str, float] = {}
    for channel in ("full", role):
        for ref, cos in store.channels[channel].search(
            query_vec, store.theta_hit, mode=store.search_mode
        ):
            prev = hits.get(ref)
            if prev is None or cos > prev:
                hits[ref] = cos
    return hits


def score_event(event: LiftedEvent, store: AmidStore, table: VectorTable):
    """Sim(e, t) for every ATIE, with per-field hit evidence."""
    per_uid_fields: dict[str, dict[str, list[tuple[str, float]]]] = {}
    for fieldname, phrase in event.lifted.items():
        if not phrase:
            continue
        role = ROLE_FOR_FIELD.get(fieldname, "full")
        q = embed_phrase(phrase, table)
        for ref, cos in sorted(_field_hits(q, role, store).items()):
            uid = store.uid_of(ref)
            per_uid_fields.setdefault(uid, {}).setdefault(fieldname, []).append((ref, cos))
    scores: dict[str, int] = {}
    for uid, fields in per_uid_fields.items():
        scores[uid] = sum(len(v) for v in fields.values())
    return scores, per_uid_fields


def prov_q(event: LiftedEvent, store: AmidStore, table: VectorTable) -> list[MatchResult]:
    """ATIEs whose similarity score exceeds theta_q, best first."""
    if store.theta_q is None:
        raise UncalibratedError("theta_q is not calibrated; run calibrate_threshold first")
    scores, evidence = score_event(event, store, table)
    results = [
        MatchResult(atie_uid=uid, score=score, field_hits=evidence[uid])
        for uid, score in scores.items()
        if score > store.theta_q
    ]
    results.sort(key=lambda r: (-r.score, r.atie_uid))
    return results


def calibrate_threshold(benign_events, store: AmidStore, table: VectorTable,
                        alpha: float | None = None) -> float:
    """Set theta_q from benign traffic via the one-sided Grubbs boundary.

    Pools Sim(e, t) for every benign event against every ATIE (zeros
    included). Zero variance degrades to theta_q = max observed score.
    """
    alpha = store.alpha if alpha is None else alpha
    pooled: list[float] = []
    n_events = 0
    for event in benign_events:
        n_events += 1
        scores, _ = score_event(event, store, table)
        for a in store.aties:
            pooled.append(float(scores.get(a.uid, 0)))
    if len(pooled) < 3:
        raise CalibrationError(
            f"need at least 3 scores for Grubbs, got {len(pooled)}"
        )
    result = grubbs_one_sided(pooled, alpha)
    theta = max(pooled) if result.degenerate else result.boundary
    store.theta_q = float(theta)
    store.alpha = alpha
    store.calibration = {
        "n_scores": result.n,
        "n_events": n_events,
        "alpha": alpha,
        "mean": result.mean,
        "stddev": result.stddev,
        "g_crit": result.g_crit,
        "degenerate": result.degenerate,
    }
    logger.info("calibrated theta_q=%.4f over %d scores (alpha=%.3f)",
                store.theta_q, result.n, alpha)
    return store.theta_q


def associate_cti(giocs: list[GIoC], store: AmidStore, table: VectorTable):
    """Rank ATIEs for a bag of gIoCs, scoring each gIoC like an event field."""
    if store.theta_q is None:
        raise UncalibratedError("theta_q is not calibrated; run calibrate_threshold first")
    scores: dict[str, int] = {}
    for g in giocs:
        q = embed_phrase(g.phrase(), table)
        hits: dict[str, float] = {}
        for channel in CHANNELS:
            for ref, cos in store.channels[channel].search(
                q, store.theta_hit, mode=store.search_mode
            ):
                prev = hits.get(ref)
                if prev is None or cos > prev:
                    hits[ref] = cos
        for ref in hits:
            uid = store.uid_of(ref)
            scores[uid] = scores.get(uid, 0) + 1
    ranked = [(uid, s) for uid, s in scores.items() if s > store.theta_q]
    ranked.sort(key=lambda p: (-p[1], p[0]))
    return ranked


# ---------------------------------------------------------------------------
# interchange format
# ---------------------------------------------------------------------------


def save_amid(store: AmidStore, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "theta_q": store.theta_q,
            "alpha": store.alpha,
            "theta_hit": store.theta_hit,
            "embedding_ref": store.embedding_ref,
        }
        if store.calibration:
            header["calibration"] = store.calibration
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for a in store.aties:
            rec = {
                "uid": a.uid,
                "des": a.des,
                "list_cti": a.list_cti,
                "list_gioc": [gioc_to_dict(g) for g in a.list_gioc],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_amid_records(path):
    """Parse the interchange file into (header dict or None, list of ATIEs)."""
    header = None
    aties: list[ATIE] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AmidSchemaError(f"{path}: line {lineno}: not valid JSON") from exc
            if "uid" not in rec:
                if lineno == 1 or header is None and not aties:
                    header = rec
                    continue
                raise AmidSchemaError(f"{path}: line {lineno}: record lacks uid")
            uid = rec["uid"]
            if uid in seen:
                raise AmidSchemaError(f"{path}: line {lineno}: duplicate uid {uid}")
            seen.add(uid)
            try:
                aties.append(
                    ATIE(
                        uid=uid,
                        des=rec.get("des", ""),
                        list_cti=list(rec.get("list_cti", [])),
                        list_gioc=[gioc_from_dict(g, uid) for g in rec.get("list_gioc", [])],
                    )
                )
            except (KeyError, AmidSchemaError) as exc:
                raise AmidSchemaError(f"{path}: line {lineno}: {exc}") from exc
    return header, aties


def load_amid(path, table: VectorTable, theta_hit: float | None = None,
              search_mode: str = "widened", bandwidth="median") -> AmidStore:
    """Load an interchange file and rebuild the search index deterministically."""
    if table is None:
        raise AmidSchemaError("an embedding table is required to load a store")
    header, aties = read_amid_records(path)
    header = header or {}
    store = AmidStore.build(
        aties,
        table,
        theta_q=header.get("theta_q"),
        theta_hit=theta_hit if theta_hit is not None else header.get("theta_hit", 0.75),
        alpha=header.get("alpha", 0.05),
        search_mode=search_mode,
        bandwidth=bandwidth,
    )
    store.calibration = header.get("calibration", {})
    ref = header.get("embedding_ref")
    if ref and ref != store.embedding_ref:
        logger.warning(
            "store was built against embedding %s but current table is %s",
            ref, store.embedding_ref,
        )
    return store
