#!/usr/bin/env python3
"""Build the bundled test vector tables.

Tokens are grouped by concept; each token vector is its group centroid plus a
small per-token perturbation, so within-group cosines are high and
cross-group cosines sit near the shared-baseline floor. A fixed seed keeps
the tables reproducible. Two files come out:

  tests/fixtures/mini_vectors.vec  - the concept vocabulary only
  tests/fixtures/vectors_10k.vec   - same vocabulary padded to 10,000 tokens

Run from the repo root: python tools/gen_vectors.py
"""

import sys
from pathlib import Path

import numpy as np

DIM = 50
SEED = 7
BASELINE_WEIGHT = 0.35   # shared component: lifts all in-domain cosines
NOISE = 0.30             # per-token angular spread inside a group

GROUPS = {
    "download": ["download", "downloads", "fetch", "pull", "ingress", "transfer",
                 "retrieve", "deliver"],
    "execute": ["execute", "run", "launch", "invoke", "spawn", "start", "shell",
                "interpreter", "execution", "bash", "python3"],
    "script_objs": ["script", "scripts", "macro", "oneliner"],
    "read_access": ["read", "scan", "scans", "scanned", "list", "show", "search",
                    "access", "enumerate", "view", "browse", "query", "stat", "open", "openat"],
    "write_mod": ["write", "create", "add", "modify", "drop", "save", "install", "append"],
    "remove_del": ["remove", "delete", "del", "erase", "destroy", "wipe", "clean",
                   "clear", "purge", "unlink", "shred"],
    "exfil": ["exfiltrate", "upload", "leak", "transmit", "steal", "post", "stolen"],
    "collect": ["collect", "collected", "gather", "harvest", "copy", "compress",
                "stage", "dump", "tar"],
    "credential": ["credential", "credentials", "password", "passwords", "login",
                   "logins", "key", "keys", "secret", "secrets", "shadow", "passwd",
                   "token", "wallet", "hash", "hashes"],
    "browser": ["browser", "browsers", "firefox", "chrome", "chromium", "mozilla", "edge"],
    "file_core": ["file", "files", "filename", "path"],
    "dir_objs": ["directory", "directories", "folder", "folders"],
    "data_objs": ["data", "document", "documents", "resource", "resources",
                  "content", "db", "sqlite"],
    "proc_objs": ["process", "processes", "task", "tasks", "job", "jobs",
                  "daemon", "binary", "binaries", "executable", "payload",
                  "program", "tool", "utility", "dll", "elf"],
    "app_objs": ["application", "applications", "service", "services", "software"],
    "sched": ["schedule", "scheduled", "cron", "crontab", "periodic", "timer",
              "autostart", "startup", "boot"],
    "priv": ["privilege", "privileges", "root", "sudo", "admin", "administrator",
             "elevation", "elevate", "elevated", "setuid", "escalate", "escalation",
             "superuser"],
    "registry_grp": ["registry", "regkey", "hive", "winlogon"],
    "mail": ["mail", "email", "phishing", "attachment", "invoice", "message",
             "inbox", "thunderbird", "outlook", "spearphishing"],
    "recon": ["whoami", "uname", "hostname", "ifconfig", "netstat", "arp",
              "discovery", "reconnaissance", "sysinfo", "enumeration", "id"],
    "net_infra": ["network", "networks", "address", "ip", "connection", "port",
                  "socket", "server"],
    "net_internal": ["internal", "intranet", "lan"],
    "net_external": ["external", "unknown", "remote", "internet"],
    "net_io": ["receive", "send", "recv", "packet"],
    "c2": ["c2", "command", "control", "beacon", "callback", "implant", "bot", "botnet"],
    "lateral": ["lateral", "ssh", "movement", "pivot", "hop", "jump", "session", "sshd"],
    "persist": ["persistence", "persist", "backdoor", "bashrc", "profile", "rc",
                "initd", "autorun"],
    "user_grp": ["user", "users", "account", "accounts", "home"],
    "exploit_grp": ["exploit", "exploits", "vulnerability", "vulnerabilities", "cve",
                    "attack", "attacker", "compromise", "malicious", "malware",
                    "lazagne", "keydnap", "mimikatz", "trojan"],
    "impact": ["encrypt", "encrypted", "ransom", "ransomware", "corrupt",
               "destructive", "destruction"],
    "forensic": ["trace", "traces", "evidence", "record", "records", "artifact", "audit"],
    "etc_objs": ["etc", "config", "configuration", "conf", "settings", "hosts", "system"],
    # benign-side concepts
    "office": ["office", "writer", "calc", "sheet", "presentation", "libreoffice",
               "word", "excel", "text", "editor", "vim", "gedit", "soffice"],
    "log_grp": ["log", "logs", "journal", "syslog", "rotate", "auditd", "journald"],
    "pkg": ["apt", "dpkg", "yum", "dnf", "package", "packages", "repository",
            "mirror", "update", "upgrade", "ubuntu", "debian", "archive"],
    "clock": ["clock", "tick", "time", "ntp", "chrony", "sync", "date", "timesync"],
    "build_grp": ["gcc", "make", "cmake", "build", "compile", "compiler", "linker", "object"],
    "media": ["image", "images", "png", "jpg", "video", "audio", "music", "player"],
    "db_grp": ["mysql", "postgres", "database", "sql", "redis", "cache"],
    "svc_benign": ["systemd", "networkd", "resolved", "udev", "dbus", "getty",
                   "snapd", "dockerd", "node"],
    "web_misc": ["http", "https", "www", "site", "web", "page", "html", "google",
                 "cloudfront", "akamai"],
    "os_misc": ["linux", "windows", "kernel", "library", "tmp", "var", "proc",
                "usr", "bin", "lib", "change", "stop", "nginx", "apache", "txt",
                "pdf", "doc", "docx", "exe", "sh", "so", "deb", "gz", "zip", "mode"],
}

# tokens whose character n-grams also get entries, so close lexical variants
# (e.g. tool names with version suffixes) embed near the base token
NGRAM_TOKENS = ["lazagne", "mimikatz", "download", "credential", "firefox"]


def unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def build_vocab(rng):
    baseline = unit(rng.normal(size=DIM))
    vectors = {}
    for tokens in GROUPS.values():
        gdir = unit(rng.normal(size=DIM))
        centroid = unit(BASELINE_WEIGHT * baseline + (1 - BASELINE_WEIGHT) * gdir)
        for tok in tokens:
            if tok in vectors:
                raise SystemExit(f"duplicate vocab token {tok!r}")
            vectors[tok] = unit(centroid + NOISE * unit(rng.normal(size=DIM)))
    # n-gram entries hover around their base token; 3-grams are skipped as
    # too promiscuous (they would pull unrelated short tokens together)
    from provhunt.embedding import char_ngrams

    for tok in NGRAM_TOKENS:
        base = vectors[tok]
        for gram in char_ngrams(tok, 4, 6):
            if gram not in vectors:
                vectors[gram] = unit(base + 0.05 * unit(rng.normal(size=DIM)))
    return vectors


def write_table(vectors, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(vectors)} {DIM}\n")
        for tok, vec in vectors.items():
            fh.write(tok + " " + " ".join(f"{x:.4f}" for x in vec) + "\n")
    print(f"wrote {len(vectors)} vectors to {path}")


def main():
    root = Path(__file__).resolve().parents[1]
    fixtures = root / "tests" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    vocab = build_vocab(rng)
    write_table(vocab, fixtures / "mini_vectors.vec")

    padded = dict(vocab)
    i = 0
    while len(padded) < 10_000:
        tok = f"tok{i:05d}"
        if tok not in padded:
            padded[tok] = unit(rng.normal(size=DIM))
        i += 1
    write_table(padded, fixtures / "vectors_10k.vec")


if __name__ == "__main__":
    sys.exit(main())
