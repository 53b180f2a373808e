"""Deterministic semantic lifting of system identifiers to word phrases.

File paths, registry keys, IP addresses, command lines, and syscall names are
rewritten into lowercase natural-language token lists via an ordered rule
table (data/lifting_rules.json). The table is plain config so deployments can
extend it without a rebuild, and so other tooling can consume the exact same
rules. Every lifter is total: anything unmatched falls through to a
tokenized, lowercased rendering of the raw value.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import re

from dataclasses import dataclass, field
from importlib import resources

logger = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")
_CAMEL_SPLIT = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_POWERSHELL = re.compile(r"^[A-Za-z]+(?:-[A-Za-z]+)+$")
_URL = re.compile(r"^[a-z][a-z0-9+.-]*://", re.IGNORECASE)
_IPV4 = re.compile(r"^\d{1,3}(?:\.\d{1,3}){3}$")
_CMD_TOKEN = re.compile(r'"[^"]*"|\'[^\']*\'|\S+')
_WIN_SWITCH = re.compile(r"^/[a-zA-Z][a-zA-Z0-9]*$")


def tokens_of(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric run."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProcessDesc:
    pid: int
    name: str
    image: str = ""


@dataclass(frozen=True)
class ObjectDesc:
    kind: str  # file | ip | process | registry
    value: str


@dataclass(frozen=True)
class RawEvent:
    ts: int  # ns since epoch
    host: str
    source: ProcessDesc
    destination: ObjectDesc
    syscalltype: str
    commandline: str = ""


@dataclass
class LiftedEvent:
    original: RawEvent
    lifted: dict[str, list[str]] = field(default_factory=dict)

    def phrase(self, fieldname: str) -> list[str]:
        return self.lifted.get(fieldname, [])


# ---------------------------------------------------------------------------
# rule table
# ---------------------------------------------------------------------------


def _py_pattern(pattern: str) -> str:
    # the shared config carries JS-style named groups; Python wants (?P<name>
    return re.sub(r"\(\?<(?![=!])", "(?P<", pattern)


class LiftingRules:
    """Compiled rule table; immutable after construction."""

    def __init__(self, raw: dict, bin_user_folder_alias: bool = False,
                 external_ip_domain_only: bool = False):
        self.raw = raw
        self.path_rules = []
        for rule in raw["path_rules"]:
            flag = rule.get("flag")
            if flag == "bin_user_folder_alias" and not bin_user_folder_alias:
                continue
            self.path_rules.append(
                (rule["id"], rule["family"], re.compile(_py_pattern(rule["pattern"])),
                 rule["template"].split())
            )
        ip_cfg = raw["ip"]
        self.internal_nets = [ipaddress.ip_network(c) for c in ip_cfg["internal_cidrs"]]
        self.ip_internal = ip_cfg["internal_template"].split()
        self.ip_external = (
            ip_cfg["external_domain_only_template"]
            if external_ip_domain_only
            else ip_cfg["external_template"]
        ).split()
        self.ip_unknown = ip_cfg["unknown_template"].split()
        self.commands: list[tuple[str, list[str]]] = []
        for row in raw["commands"]:
            for m in row["match"]:
                self.commands.append((m, list(row["tokens"])))
        self.command_lookup: dict[str, list[str]] = {}
        for name, toks in self.commands:
            # first-match precedence: later duplicate rows stay shadowed
            self.command_lookup.setdefault(name, toks)
        self.syscalls = {k: list(v) for k, v in raw["syscalls"].items()}
        self.app_roots = list(raw.get("app_roots", []))


def load_rules(path=None, **kwargs) -> LiftingRules:
    if path is None:
        with resources.files("provhunt.data").joinpath("lifting_rules.json").open(
            "r", encoding="utf-8"
        ) as fh:
            raw = json.load(fh)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    return LiftingRules(raw, **kwargs)


_DEFAULT_RULES: LiftingRules | None = None


def default_rules() -> LiftingRules:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = load_rules()
    return _DEFAULT_RULES


def load_dns_map(path) -> dict[str, str]:
    """Two-column text file: address whitespace domain."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) >= 2:
                out[parts[0]] = parts[1]
    return out


# ---------------------------------------------------------------------------
# path lifting
# ---------------------------------------------------------------------------


def _split_ext(name: str) -> tuple[str, str | None]:
    dot = name.rfind(".")
    if dot <= 0 or dot == len(name) - 1:
        return name, None
    return name[:dot], name[dot + 1 :]


def _looks_windows(path: str) -> bool:
    low = path.lower()
    return (
        "\\" in path
        or bool(re.match(r"^[a-z]:[/\\]", low))
        or bool(re.match(r"^(hkcu|hklm|hkcr|hkcc|hku|hkey_)", low))
    )


def lift_path(path: str, os: str = "linux", rules: LiftingRules | None = None) -> list[str]:
    """Rewrite one filesystem/registry path via the first matching rule row."""
    if not path:
        raise ValueError("lift_path needs a non-empty path")
    rules = rules or default_rules()
    windows = os == "windows" or _looks_windows(path)
    norm = path.replace("\\", "/").lower().rstrip()
    families = ("registry", "windows") if windows else ("registry", "linux")

    for rule_id, family, pattern, template in rules.path_rules:
        if family not in families:
            continue
        m = pattern.match(norm)
        if m is None:
            continue
        groups = m.groupdict()
        final = groups.get("F")
        stem, ext = _split_ext(final) if final else (None, None)
        slots: dict[str, list[str] | None] = {
            "{D}": tokens_of(groups["D"]) if groups.get("D") else None,
            "{F}": tokens_of(stem) if stem else None,
            "{E}": [ext.lower()] if ext else None,
        }
        if final is not None and slots["{E}"] is None:
            # extensionless: the file name stands in for the extension
            slots["{E}"] = slots["{F}"]
            slots["{F}"] = None
        out: list[str] = []
        for piece in template:
            if piece in slots:
                val = slots[piece]
                if val:
                    out.extend(val)
            elif piece == "{FE}":
                if final:
                    out.append(final.lower())
            elif piece == "{SEGS}":
                out.extend(tokens_of(norm))
            else:
                out.append(piece)
        if out:
            return out
    # total fallback: tokenized raw value
    return tokens_of(path) or [path.lower()]


# ---------------------------------------------------------------------------
# IP lifting
# ---------------------------------------------------------------------------


def lift_ip(addr: str, dns_map: dict[str, str] | None = None,
            rules: LiftingRules | None = None) -> list[str]:
    rules = rules or default_rules()
    try:
        ip = ipaddress.ip_address(addr.strip())
    except ValueError as exc:
        raise ValueError(f"not an IP address: {addr!r}") from exc
    for net in rules.internal_nets:
        if ip.version == net.version and ip in net:
            return list(rules.ip_internal)
    domain = (dns_map or {}).get(str(ip))
    if domain:
        label = domain.split(".")[0].lower()
        return [label if p == "{Dom}" else p for p in rules.ip_external]
    return list(rules.ip_unknown)


# ---------------------------------------------------------------------------
# command and syscall lifting
# ---------------------------------------------------------------------------


def _powershell_tokens(word: str) -> list[str]:
    parts: list[str] = []
    for chunk in word.split("-"):
        parts.extend(_CAMEL_SPLIT.sub(" ", chunk).split())
    return [p.lower() for p in parts if p]


def _lift_argument(arg: str, dns_map, rules: LiftingRules) -> list[str]:
    if _URL.match(arg):
        rest = arg.split("://", 1)[1]
        host, _, tail = rest.partition("/")
        host = host.split(":")[0]
        out: list[str] = []
        if _IPV4.match(host):
            out.extend(lift_ip(host, dns_map, rules))
        else:
            out.extend(tokens_of(host.split(".")[0]))
        if tail:
            out.extend(lift_path("/" + tail, rules=rules))
        return out
    if _IPV4.match(arg):
        if all(int(o) <= 255 for o in arg.split(".")):
            return lift_ip(arg, dns_map, rules)
        return tokens_of(arg)
    if "/" in arg or "\\" in arg or re.match(r"^[a-zA-Z]:", arg) or _looks_windows(arg):
        return lift_path(arg, rules=rules)
    return tokens_of(arg)


def lift_command(cmdline: str, dns_map: dict[str, str] | None = None,
                 rules: LiftingRules | None = None) -> list[str]:
    """Expand the executable per the command table, then lift path/IP args."""
    rules = rules or default_rules()
    if not cmdline or not cmdline.strip():
        return []
    # not shlex: backslashes in Windows paths must survive splitting
    parts = [m.group(0) for m in _CMD_TOKEN.finditer(cmdline)]
    if not parts:
        return []
    exe_raw = parts[0]
    exe = exe_raw.replace("\\", "/").split("/")[-1].lower()
    args = parts[1:]

    out: list[str] = []
    if args and f"{exe} {args[0].lower()}" in rules.command_lookup:
        out.extend(rules.command_lookup[f"{exe} {args[0].lower()}"])
        args = args[1:]
    elif exe in rules.command_lookup:
        out.extend(rules.command_lookup[exe])
    elif _POWERSHELL.match(exe_raw) and any(c.isupper() for c in exe_raw):
        out.extend(_powershell_tokens(exe_raw))
    else:
        out.extend(tokens_of(exe))

    for arg in args:
        arg = arg.strip("\"'")
        # option noise: -x/--flag and single-segment /switch forms
        if not arg or arg.startswith("-") or _WIN_SWITCH.match(arg):
            continue
        out.extend(t for t in _lift_argument(arg, dns_map, rules)
                   if any(c.isalnum() for c in t))
    return out


def lift_syscall(name: str, rules: LiftingRules | None = None) -> list[str]:
    rules = rules or default_rules()
    low = name.strip().lower()
    if low in rules.syscalls:
        return list(rules.syscalls[low])
    return tokens_of(low) or [low]


# ---------------------------------------------------------------------------
# process / whole-event lifting
# ---------------------------------------------------------------------------


def lift_process(name: str, image: str = "", rules: LiftingRules | None = None) -> list[str]:
    """Application name via install-folder heuristic, else the bare name."""
    rules = rules or default_rules()
    if image:
        norm = image.replace("\\", "/").lower()
        for root in rules.app_roots:
            if norm.startswith(root + "/"):
                rest = norm[len(root) + 1 :]
                segs = [s for s in rest.split("/") if s]
                if len(segs) == 1:
                    stem, _ = _split_ext(segs[0])
                    return tokens_of(stem) or tokens_of(segs[0])
                if segs:
                    return tokens_of(segs[0])
        base = norm.rstrip("/").split("/")[-1]
        stem, _ = _split_ext(base)
        if stem:
            return tokens_of(stem) or [stem]
    return tokens_of(name) or [name.lower()]


def lift_event(event: RawEvent, dns_map: dict[str, str] | None = None,
               rules: LiftingRules | None = None) -> LiftedEvent:
    """Lift every populated field; lifting failures degrade to raw tokens."""
    rules = rules or default_rules()
    lifted: dict[str, list[str]] = {}

    def _safe(fieldname: str, fn, raw_value: str):
        try:
            phrase = fn()
        except Exception as exc:
            logger.warning("lifting %s failed for %r: %s", fieldname, raw_value, exc)
            phrase = tokens_of(raw_value)
        if phrase:
            lifted[fieldname] = phrase

    src = event.source
    if src.name or src.image:
        _safe("source", lambda: lift_process(src.name, src.image, rules), src.name)

    dst = event.destination
    if dst.value:
        kind = dst.kind
        if kind == "ip":
            _safe("destination", lambda: lift_ip(dst.value, dns_map, rules), dst.value)
        elif kind == "process":
            name = dst.value.split(":", 1)[1] if re.match(r"^\d+:", dst.value) else dst.value
            _safe("destination", lambda: lift_process(name, rules=rules), dst.value)
        elif kind == "registry":
            _safe("destination", lambda: lift_path(dst.value, "windows", rules), dst.value)
        else:
            if any(ch.isspace() for ch in dst.value.strip()):
                # already natural language; lifting is idempotent on phrases
                lifted["destination"] = tokens_of(dst.value)
            else:
                _safe("destination", lambda: lift_path(dst.value, rules=rules), dst.value)

    if event.syscalltype:
        _safe("syscalltype", lambda: lift_syscall(event.syscalltype, rules), event.syscalltype)
    if event.commandline and event.commandline.strip():
        _safe("commandline", lambda: lift_command(event.commandline, dns_map, rules),
              event.commandline)
    return LiftedEvent(original=event, lifted=lifted)
