/**
 * IoC parsing: the extended regex families (registry run keys, file
 * names/paths, common Linux/Windows command words) plus the base indicator
 * grammar (IPs, hashes, domains, URLs, CVEs). Extraction is best-effort over
 * whitespace-delimited candidate spans; nothing here throws.
 */

export type IocType =
  | "registry_key"
  | "file_path"
  | "command"
  | "ipv4"
  | "domain"
  | "url"
  | "md5"
  | "sha1"
  | "sha256"
  | "cve";

export interface Ioc {
  type: IocType;
  value: string;
}

// registry run keys: root hive followed by backslash segments
export const REGISTRY_RUN_KEY =
  /^(HKCU|HKLM|HKCR|HKCC|HKEY_LOCAL_MACHINE|HKEY_CURRENT_USER|HKEY_CLASSES_ROOT|HKEY_CURRENT_CONFIG|HKEY_USERS)(\\[^\\?/*|<>:"]+)*$/i;

// file names and paths: optional drive or dot prefix, separator, segments,
// optional final component with an optional extension
export const FILE_PATH =
  /^(?:(?:[a-zA-Z]:|\.{1,2})?[\\/](?:[^\\?/*|<>:"\s]+[\\/])*)(?:(?:[^\\?/*|<>:"\s]+?)(?:\.[^.\\?/*|<>:"\s]+)?)?$/;

export const LINUX_COMMANDS = new Set([
  "scp", "ssh", "sftp", "tftp", "curl", "sshd", "certutil", "wget", "ls",
  "rm", "sh", "mv", "stat", "cat", "kill", "pkill", "grep", "find",
  "ifconfig", "cp", "dir", "del", "rmdir", "schtask", "rundll", "taskkill",
]);

export const TWO_WORD_COMMANDS = new Set(["reg add", "reg del"]);

export const WINDOWS_COMMANDS = new Set([
  "Get-Process", "Get-Service", "Get-ChildItem", "New-Item", "Remove-Item",
  "Set-Location", "Clear-Host",
]);

const IPV4 = /^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$/;
const URL_RE = /^(?:https?|hxxps?|ftp|tftp):\/\/\S+$/i;
const MD5 = /^[a-fA-F0-9]{32}$/;
const SHA1 = /^[a-fA-F0-9]{40}$/;
const SHA256 = /^[a-fA-F0-9]{64}$/;
const CVE = /^CVE-\d{4}-\d{4,}$/i;
const DOMAIN =
  /^(?:[a-z0-9](?:[a-z0-9-]*[a-z0-9])?\.)+(?:com|net|org|io|info|biz|ru|cn|de|uk|fr|nl|cc|tk|top|xyz|onion|gov|mil|edu)$/i;

function validIpv4(s: string): boolean {
  const m = IPV4.exec(s);
  if (!m) return false;
  return m.slice(1).every((o) => Number(o) <= 255);
}

/** Candidate spans: whitespace tokens with surrounding punctuation stripped. */
function candidates(text: string): string[] {
  const out: string[] = [];
  for (const raw of text.split(/\s+/)) {
    const stripped = raw.replace(/^["'`“”(,;:]+|["'`“”),.;:]+$/g, "");
    if (stripped) out.push(stripped);
  }
  return out;
}

export function parseIocs(text: string): Ioc[] {
  const found: Ioc[] = [];
  const seen = new Set<string>();

  const push = (type: IocType, value: string) => {
    const key = `${type}:${value}`;
    if (!seen.has(key)) {
      seen.add(key);
      found.push({ type, value });
    }
  };

  // registry keys may contain spaces ("Windows NT"): scan the raw text first
  const regScan =
    /(?:HKCU|HKLM|HKCR|HKCC|HKEY_LOCAL_MACHINE|HKEY_CURRENT_USER|HKEY_CLASSES_ROOT|HKEY_CURRENT_CONFIG|HKEY_USERS)(?:\\[^\\?/*|<>:"\r\n]+)*/gi;
  for (const m of text.matchAll(regScan)) {
    const value = m[0].replace(/[.,;]+$/, "");
    if (REGISTRY_RUN_KEY.test(value)) push("registry_key", value);
  }

  const tokens = candidates(text);
  for (let i = 0; i < tokens.length; i++) {
    const tok = tokens[i];
    if (CVE.test(tok)) {
      push("cve", tok.toUpperCase());
    } else if (URL_RE.test(tok)) {
      push("url", tok);
    } else if (validIpv4(tok)) {
      push("ipv4", tok);
    } else if (MD5.test(tok)) {
      push("md5", tok.toLowerCase());
    } else if (SHA1.test(tok)) {
      push("sha1", tok.toLowerCase());
    } else if (SHA256.test(tok)) {
      push("sha256", tok.toLowerCase());
    } else if (REGISTRY_RUN_KEY.test(tok)) {
      push("registry_key", tok);
    } else if ((tok.includes("/") || tok.includes("\\")) && FILE_PATH.test(tok)) {
      push("file_path", tok);
    } else if (DOMAIN.test(tok)) {
      push("domain", tok.toLowerCase());
    } else if (WINDOWS_COMMANDS.has(tok)) {
      push("command", tok);
    } else {
      const low = tok.toLowerCase();
      const next = i + 1 < tokens.length ? tokens[i + 1].toLowerCase() : "";
      if (next && TWO_WORD_COMMANDS.has(`${low} ${next}`)) {
        push("command", `${low} ${next}`);
      } else if (LINUX_COMMANDS.has(low)) {
        push("command", low);
      }
    }
  }
  return found;
}
