"""Analyst-ready report assembly with post-hoc factual verification.

Reports carry three parts: high-level context, technical details, and
actionable guidance. Technical details come straight from the alert evidence
(timeline, exported subgraph, lifecycle summary, IoC list). Context and
guidance come from a pluggable text-generation client driven by a structured
prompt; a deterministic template engine doubles as the always-available
fallback, so report generation can never fail end to end. After generation,
every concrete entity mentioned in the narrative is checked against the
alert's evidence and unsupported mentions are flagged.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field

import requests

from .reasoning import Alert, Stage

logger = logging.getLogger(__name__)


class ClientError(RuntimeError):
    pass


class HttpTextGenClient:
    """Plain prompt-in/text-out wire call: POST {model, prompt} -> {text}."""

    def __init__(self, endpoint: str, model: str = "default", timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout

    def generate(self, prompt: str) -> str:
        try:
            resp = requests.post(
                self.endpoint,
                json={"model": self.model, "prompt": prompt},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            return resp.json()["text"]
        except Exception as exc:
            raise ClientError(f"text generation call failed: {exc}") from exc


class ReplayStubClient:
    """Deterministic record/replay client for tests: responses keyed by the
    sha256 of the prompt."""

    def __init__(self, responses: dict[str, str]):
        self.responses = responses

    @staticmethod
    def key_for(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]

    def generate(self, prompt: str) -> str:
        key = self.key_for(prompt)
        if key not in self.responses:
            raise ClientError(f"no canned response for prompt key {key}")
        return self.responses[key]


# ---------------------------------------------------------------------------
# technical details
# ---------------------------------------------------------------------------


def assemble_technical(alert: Alert, graph) -> dict:
    """Timeline, subgraph export, per-stage summary, and the IoC list."""
    lc = alert.lifecycle
    seen_edges = {}
    for stage, evs in lc.evidence.items():
        for ev in evs:
            seen_edges.setdefault(ev.edge_id, set()).add(stage)
    timeline = []
    for eid in sorted(seen_edges, key=lambda e: (graph.edges[e].ts, e)):
        edge = graph.edges[eid]
        timeline.append({
            "ts": edge.ts,
            "edge_id": eid,
            "actor": graph.nodes[edge.src].value,
            "syscall": edge.syscalltype,
            "target": graph.nodes[edge.dst].value,
            "techniques": sorted({m.atie_uid for m in edge.matches}),
            "stages": sorted(s.value for s in seen_edges[eid]),
        })

    lifecycle_summary = []
    for stage in Stage:
        evs = lc.evidence.get(stage)
        if not evs:
            continue
        span = lc.stage_span(stage)
        lifecycle_summary.append({
            "stage": stage.value,
            "first_ts": span[0],
            "last_ts": span[1],
            "techniques": sorted({e.technique_uid for e in evs}),
            "evidence_count": len(evs),
        })

    staged_nodes = set()
    for nodes in lc.stage_nodes().values():
        staged_nodes.update(nodes)
    # staged nodes plus the endpoints their evidence edges touched: the
    # targets are where the concrete indicators (paths, addresses) live
    for eid in seen_edges:
        edge = graph.edges[eid]
        staged_nodes.update((edge.src, edge.dst))
    ioc_list = sorted({
        graph.nodes[nid].value for nid in staged_nodes if nid in graph.nodes
    })

    return {
        "timeline": timeline,
        "subgraph": graph.export_subgraph(lc.nodes),
        "lifecycle": lifecycle_summary,
        "ioc_list": ioc_list,
    }


# ---------------------------------------------------------------------------
# narrative generation
# ---------------------------------------------------------------------------

_PROMPT_HEADER = (
    "You are a cybersecurity analyst generating an alert report based on "
    "observed system activity. Use only the evidence provided below.\n"
)

_PROMPT_TAIL = (
    "\nDo not invent information. All claims must be supported by the "
    "provided evidence.\n"
    "Answer in exactly this machine-readable layout:\n"
    "[HIGH-LEVEL CONTEXT]\n"
    "threat_actor: <one line>\n"
    "objectives: <one line>\n"
    "business_impact: <one line>\n"
    "[ACTIONABLE GUIDANCE]\n"
    "- mitigation: <step> | detection_rule: <rule> | hardening: <strategy>\n"
)


def render_prompt(alert: Alert, technical: dict) -> str:
    lines = [_PROMPT_HEADER, "## Evidence:"]
    stages = " -> ".join(s["stage"] for s in technical["lifecycle"])
    lines.append(f"**Alert Lifecycle**: {stages}")
    lines.append("**Attack Behaviors in Each Stage of Lifecycle with the Timestamp**:")
    for entry in technical["timeline"]:
        lines.append(
            f"- ts={entry['ts']} [{'/'.join(entry['stages'])}] "
            f"{entry['actor']} {entry['syscall']} {entry['target']} "
            f"(techniques: {', '.join(entry['techniques'])})"
        )
    lines.append("\n## Generating contents:")
    lines.append("**High-Level Context**: Summarize the attack in one paragraph. Include:")
    lines.append("- Threat actor (if identifiable)\n- Likely objectives\n- Business impact")
    lines.append("**Actionable Guidance**: Provide specific recommendations. For each, include:")
    lines.append("- Mitigation step\n- Detection rule (e.g., YARA, Sigma)\n- Hardening strategy")
    lines.append(_PROMPT_TAIL)
    return "\n".join(lines)


def render_validation_prompt(claim: str, technical: dict) -> str:
    stages = " -> ".join(s["stage"] for s in technical["lifecycle"])
    behaviors = "\n".join(
        f"- ts={e['ts']} {e['actor']} {e['syscall']} {e['target']}"
        for e in technical["timeline"]
    )
    return (
        "You are a cybersecurity analyst validating the authenticity of the "
        "content of an alert report based on observed system activity.\n\n"
        "## Evidence:\n"
        f"**Alert Lifecycle**: {stages}\n"
        "**Attack Behaviors in Each Stage of Lifecycle with the Timestamp**:\n"
        f"{behaviors}\n\n"
        f'Review the following actionable guidance from the alert report: "{claim}"\n'
        "Verify whether this relates to events of the provided evidence.\n\n"
        "If not, mark it as unsupported."
    )


_SECTION_RE = re.compile(
    r"\[HIGH-LEVEL CONTEXT\](?P<ctx>.*?)\[ACTIONABLE GUIDANCE\](?P<guide>.*)",
    re.DOTALL | re.IGNORECASE,
)
_KV_RE = re.compile(r"^(threat_actor|objectives|business_impact)\s*:\s*(.+)$", re.MULTILINE)
_GUIDE_RE = re.compile(
    r"-\s*mitigation\s*:\s*(?P<m>[^|]+)\|\s*detection_rule\s*:\s*(?P<d>[^|]+)"
    r"\|\s*hardening\s*:\s*(?P<h>.+)"
)


def parse_narrative(text: str):
    m = _SECTION_RE.search(text)
    if not m:
        raise ValueError("narrative lacks the required sections")
    context = {k: v.strip() for k, v in _KV_RE.findall(m.group("ctx"))}
    if set(context) != {"threat_actor", "objectives", "business_impact"}:
        raise ValueError("high-level context is missing required keys")
    guidance = []
    for line in m.group("guide").splitlines():
        gm = _GUIDE_RE.search(line)
        if gm:
            guidance.append({
                "mitigation": gm.group("m").strip(),
                "detection_rule": gm.group("d").strip(),
                "hardening": gm.group("h").strip(),
            })
    if not guidance:
        raise ValueError("no guidance items parsed")
    return context, guidance


def template_narrative(alert: Alert, technical: dict):
    """Deterministic slot-filled narrative from the same schema."""
    stages = [s["stage"] for s in technical["lifecycle"]]
    actors = sorted({e["actor"] for e in technical["timeline"]})
    targets = sorted({e["target"] for e in technical["timeline"]})
    techniques = sorted({t for s in technical["lifecycle"] for t in s["techniques"]})
    context = {
        "threat_actor": (
            "unattributed; observed acting processes: " + ", ".join(actors)
            if actors else "unattributed"
        ),
        "objectives": (
            "progression through lifecycle stages " + " -> ".join(stages)
            + " using techniques " + ", ".join(techniques)
        ),
        "business_impact": (
            "affected entities: " + ", ".join(targets) if targets else "none recorded"
        ),
    }
    guidance = []
    for entry in technical["timeline"]:
        guidance.append({
            "mitigation": f"review and contain activity of {entry['actor']} against {entry['target']}",
            "detection_rule": (
                f"alert when {entry['actor']} performs {entry['syscall']} on {entry['target']}"
            ),
            "hardening": f"restrict access to {entry['target']}",
        })
    return context, guidance


def generate_narrative(alert: Alert, technical: dict, client=None):
    """Client-backed narrative with automatic template fallback.

    Returns (context, guidance, provenance) where provenance records whether
    the client or the template produced the text.
    """
    prompt = render_prompt(alert, technical)
    if client is not None:
        try:
            raw = client.generate(prompt)
            context, guidance = parse_narrative(raw)
            return context, guidance, "client"
        except (ClientError, ValueError) as exc:
            logger.warning("narrative client failed (%s); using template", exc)
            context, guidance = template_narrative(alert, technical)
            return context, guidance, f"template-fallback: {exc}"
    context, guidance = template_narrative(alert, technical)
    return context, guidance, "template"


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

_IP_MENTION = re.compile(r"\b\d{1,3}(?:\.\d{1,3}){3}\b")
_PATH_MENTION = re.compile(r"(?:[A-Za-z]:)?[\\/](?:[\w.\-]+[\\/])*[\w.\-]+")
_REG_MENTION = re.compile(
    r"\b(?:HKCU|HKLM|HKCR|HKCC|HKU|HKEY_[A-Z_]+)(?:\\[^\\\s,;]+)*", re.IGNORECASE
)
_TECH_MENTION = re.compile(r"\bT\d{4}(?:\.\d{3})?\b")


def _normalize_entity(value: str) -> str:
    return value.replace("\\", "/").strip().strip('."\',;:').lower()


def extract_entity_mentions(text: str) -> list[str]:
    mentions = []
    for pattern in (_REG_MENTION, _PATH_MENTION, _IP_MENTION, _TECH_MENTION):
        mentions.extend(m.group(0).rstrip(".,;:") for m in pattern.finditer(text))
    # keep only maximal mentions: fragments of a longer mention carry no
    # independent claim (e.g. the path tail of a registry key)
    out = []
    for m in mentions:
        if any(m != other and m in other for other in mentions):
            continue
        if m not in out:
            out.append(m)
    return out


def evidence_entities(alert: Alert, graph, technical: dict) -> set[str]:
    entities: set[str] = set()
    for nid in alert.lifecycle.nodes:
        node = graph.nodes.get(nid)
        if node is None:
            continue
        entities.add(_normalize_entity(node.value))
        entities.add(node.host.lower())
    for summary in technical["lifecycle"]:
        entities.update(t.lower() for t in summary["techniques"])
    for entry in technical["timeline"]:
        entities.add(_normalize_entity(entry["actor"]))
        entities.add(_normalize_entity(entry["target"]))
    entities.discard("")
    return entities


def verify_report(narrative_texts, alert: Alert, graph, technical: dict,
                  client=None) -> list[dict]:
    """Flag every concrete entity mention that the evidence cannot back.

    `narrative_texts` is an iterable of generated free-text strings (context
    values and guidance fields). When a client is supplied, its second
    opinion on each flagged claim is recorded but not authoritative.
    """
    known = evidence_entities(alert, graph, technical)
    verification = []
    for text in narrative_texts:
        for mention in extract_entity_mentions(text):
            norm = _normalize_entity(mention)
            # fragments of a known entity (split spaced paths etc.) count as
            # grounded; only whole unknown entities are claims to flag
            supported = norm in known or any(norm in k for k in known if len(norm) > 3)
            entry = {
                "claim": text.strip(),
                "entity": mention,
                "status": "supported" if supported else "unsupported",
            }
            if not supported and client is not None:
                try:
                    entry["client_opinion"] = client.generate(
                        render_validation_prompt(text.strip(), technical)
                    )
                except ClientError as exc:
                    entry["client_opinion"] = f"unavailable: {exc}"
            verification.append(entry)
    return verification


# ---------------------------------------------------------------------------
# the full report
# ---------------------------------------------------------------------------


@dataclass
class AptReport:
    high_level_context: dict
    technical_details: dict
    actionable_guidance: list[dict]
    verification: list[dict]
    provenance: str = "template"
    alert_rationale: list[str] = field(default_factory=list)

    def unsupported_claims(self) -> list[dict]:
        return [v for v in self.verification if v["status"] == "unsupported"]


def build_report(alert: Alert, graph, client=None, verify_client=None) -> AptReport:
    technical = assemble_technical(alert, graph)
    context, guidance, provenance = generate_narrative(alert, technical, client)
    texts = list(context.values())
    for item in guidance:
        texts.extend(item.values())
    verification = verify_report(texts, alert, graph, technical, client=verify_client)
    return AptReport(
        high_level_context=context,
        technical_details=technical,
        actionable_guidance=guidance,
        verification=verification,
        provenance=provenance,
        alert_rationale=list(alert.rationale),
    )


def render_markdown(report: AptReport) -> str:
    lines = ["# APT Alert Report", ""]
    lines.append("## High-Level Context")
    for key, value in report.high_level_context.items():
        lines.append(f"- **{key}**: {value}")
    lines.append("")
    lines.append("## Technical Details")
    lines.append("### Lifecycle")
    for s in report.technical_details["lifecycle"]:
        lines.append(
            f"- {s['stage']}: {s['evidence_count']} events, "
            f"techniques {', '.join(s['techniques'])} "
            f"({s['first_ts']} .. {s['last_ts']})"
        )
    lines.append("### Timeline")
    for e in report.technical_details["timeline"]:
        lines.append(
            f"- `{e['ts']}` {e['actor']} --{e['syscall']}--> {e['target']} "
            f"[{', '.join(e['techniques'])}]"
        )
    lines.append("### Indicators")
    for ioc in report.technical_details["ioc_list"]:
        lines.append(f"- `{ioc}`")
    lines.append("")
    lines.append("## Actionable Guidance")
    for item in report.actionable_guidance:
        lines.append(f"- mitigation: {item['mitigation']}")
        lines.append(f"  - detection rule: {item['detection_rule']}")
        lines.append(f"  - hardening: {item['hardening']}")
    unsupported = report.unsupported_claims()
    lines.append("")
    lines.append("## Verification")
    lines.append(f"- narrative source: {report.provenance}")
    lines.append(f"- unsupported claims: {len(unsupported)}")
    for v in unsupported:
        lines.append(f"  - UNSUPPORTED {v['entity']!r} in: {v['claim']}")
    return "\n".join(lines)


def report_to_json(report: AptReport) -> str:
    return json.dumps({
        "high_level_context": report.high_level_context,
        "technical_details": report.technical_details,
        "actionable_guidance": report.actionable_guidance,
        "verification": report.verification,
        "provenance": report.provenance,
        "alert_rationale": report.alert_rationale,
    }, sort_keys=True)
