/**
 * Identifier lifting over the shared rule table.
 *
 * This mirrors the detection engine's lifting semantics exactly — same rule
 * JSON, same tokenization, same slot rules — so converted IoC phrases are
 * byte-identical to what the engine produces for the same identifier. The
 * golden-fixture test (test/lift.test.ts) holds the two implementations
 * together.
 */

import { readFileSync } from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";

export interface PathRule {
  id: string;
  family: "registry" | "windows" | "linux";
  flag?: string;
  pattern: string;
  template: string;
}

export interface RuleTable {
  path_rules: PathRule[];
  ip: {
    internal_cidrs: string[];
    internal_template: string;
    external_template: string;
    external_domain_only_template: string;
    unknown_template: string;
  };
  commands: { match: string[]; tokens: string[] }[];
  syscalls: Record<string, string[]>;
  app_roots: string[];
}

export interface LiftOptions {
  binUserFolderAlias?: boolean;
  externalIpDomainOnly?: boolean;
}

interface CompiledRule {
  id: string;
  family: string;
  regex: RegExp;
  template: string[];
}

export class LiftingRules {
  readonly pathRules: CompiledRule[] = [];
  readonly internalCidrs: string[];
  readonly ipInternal: string[];
  readonly ipExternal: string[];
  readonly ipUnknown: string[];
  readonly commandLookup = new Map<string, string[]>();
  readonly syscalls: Map<string, string[]>;
  readonly appRoots: string[];

  constructor(raw: RuleTable, opts: LiftOptions = {}) {
    for (const rule of raw.path_rules) {
      if (rule.flag === "bin_user_folder_alias" && !opts.binUserFolderAlias) {
        continue;
      }
      this.pathRules.push({
        id: rule.id,
        family: rule.family,
        regex: new RegExp(rule.pattern),
        template: rule.template.split(" "),
      });
    }
    this.internalCidrs = raw.ip.internal_cidrs;
    this.ipInternal = raw.ip.internal_template.split(" ");
    this.ipExternal = (opts.externalIpDomainOnly
      ? raw.ip.external_domain_only_template
      : raw.ip.external_template
    ).split(" ");
    this.ipUnknown = raw.ip.unknown_template.split(" ");
    for (const row of raw.commands) {
      for (const m of row.match) {
        if (!this.commandLookup.has(m)) {
          this.commandLookup.set(m, row.tokens); // first match shadows later rows
        }
      }
    }
    this.syscalls = new Map(Object.entries(raw.syscalls));
    this.appRoots = raw.app_roots ?? [];
  }
}

const HERE = path.dirname(fileURLToPath(import.meta.url));

/** Default location of the engine's rule table relative to this package. */
export function defaultRulesPath(): string {
  return path.resolve(HERE, "..", "..", "src", "provhunt", "data", "lifting_rules.json");
}

export function loadRules(rulesPath?: string, opts: LiftOptions = {}): LiftingRules {
  const p = rulesPath ?? defaultRulesPath();
  const raw = JSON.parse(readFileSync(p, "utf-8")) as RuleTable;
  return new LiftingRules(raw, opts);
}

let defaultRules: LiftingRules | null = null;

function rulesOrDefault(rules?: LiftingRules): LiftingRules {
  if (rules) return rules;
  if (!defaultRules) defaultRules = loadRules();
  return defaultRules;
}

export function tokensOf(text: string): string[] {
  return text.toLowerCase().split(/[^a-z0-9]+/).filter(Boolean);
}

function splitExt(name: string): [string, string | null] {
  const dot = name.lastIndexOf(".");
  if (dot <= 0 || dot === name.length - 1) return [name, null];
  return [name.slice(0, dot), name.slice(dot + 1)];
}

const WIN_LOOK = /^(hkcu|hklm|hkcr|hkcc|hku|hkey_)/;

function looksWindows(p: string): boolean {
  return p.includes("\\") || /^[a-z]:[/\\]/.test(p.toLowerCase())
    || WIN_LOOK.test(p.toLowerCase());
}

export function liftPath(p: string, os: "linux" | "windows" = "linux",
                         rules?: LiftingRules): string[] {
  if (!p) throw new Error("liftPath needs a non-empty path");
  const table = rulesOrDefault(rules);
  const windows = os === "windows" || looksWindows(p);
  const norm = p.replace(/\\/g, "/").toLowerCase().replace(/\s+$/, "");
  const families = windows ? ["registry", "windows"] : ["registry", "linux"];

  for (const rule of table.pathRules) {
    if (!families.includes(rule.family)) continue;
    const m = rule.regex.exec(norm);
    if (!m) continue;
    const groups = m.groups ?? {};
    const final = groups["F"];
    let stemTokens: string[] | null = null;
    let extTokens: string[] | null = null;
    if (final !== undefined && final !== null) {
      const [stem, ext] = splitExt(final);
      stemTokens = stem ? tokensOf(stem) : null;
      if (stemTokens && stemTokens.length === 0) stemTokens = null;
      extTokens = ext ? [ext.toLowerCase()] : null;
      if (extTokens === null) {
        // extensionless: the file name stands in for the extension
        extTokens = stemTokens;
        stemTokens = null;
      }
    }
    const slots: Record<string, string[] | null> = {
      "{D}": groups["D"] ? tokensOf(groups["D"]) : null,
      "{F}": stemTokens,
      "{E}": extTokens,
    };
    const out: string[] = [];
    for (const piece of rule.template) {
      if (piece in slots) {
        const val = slots[piece];
        if (val && val.length) out.push(...val);
      } else if (piece === "{FE}") {
        if (final) out.push(final.toLowerCase());
      } else if (piece === "{SEGS}") {
        out.push(...tokensOf(norm));
      } else {
        out.push(piece);
      }
    }
    if (out.length) return out;
  }
  const fallback = tokensOf(p);
  return fallback.length ? fallback : [p.toLowerCase()];
}

// -- IPs ---------------------------------------------------------------------

function parseIPv4(addr: string): number | null {
  const m = /^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$/.exec(addr);
  if (!m) return null;
  let value = 0;
  for (let i = 1; i <= 4; i++) {
    const octet = Number(m[i]);
    if (octet > 255) return null;
    value = value * 256 + octet;
  }
  return value;
}

function inCidr4(addr: number, cidr: string): boolean {
  const [net, bitsStr] = cidr.split("/");
  const base = parseIPv4(net);
  if (base === null) return false;
  const bits = Number(bitsStr);
  const mask = bits === 0 ? 0 : (~0 << (32 - bits)) >>> 0;
  return ((addr & mask) >>> 0) === ((base & mask) >>> 0);
}

function isInternalV6(addr: string, cidrs: string[]): boolean {
  const low = addr.toLowerCase();
  if (low === "::1" && cidrs.some((c) => c.startsWith("::1"))) return true;
  // fc00::/7 covers fc.. and fd..
  if (cidrs.some((c) => c.startsWith("fc00::/7"))
      && (low.startsWith("fc") || low.startsWith("fd"))) {
    return true;
  }
  return false;
}

export function liftIp(addr: string, dnsMap: Record<string, string> = {},
                       rules?: LiftingRules): string[] {
  const table = rulesOrDefault(rules);
  const trimmed = addr.trim();
  const v4 = parseIPv4(trimmed);
  if (v4 === null && !trimmed.includes(":")) {
    throw new Error(`not an IP address: ${addr}`);
  }
  if (v4 !== null) {
    for (const cidr of table.internalCidrs) {
      if (!cidr.includes(":") && inCidr4(v4, cidr)) return [...table.ipInternal];
    }
  } else if (isInternalV6(trimmed, table.internalCidrs)) {
    return [...table.ipInternal];
  }
  const domain = dnsMap[trimmed];
  if (domain) {
    const label = domain.split(".")[0].toLowerCase();
    return table.ipExternal.map((t) => (t === "{Dom}" ? label : t));
  }
  return [...table.ipUnknown];
}

// -- commands and syscalls -----------------------------------------------------

const CMD_TOKEN = /"[^"]*"|'[^']*'|\S+/g;
const WIN_SWITCH = /^\/[a-zA-Z][a-zA-Z0-9]*$/;
const POWERSHELL = /^[A-Za-z]+(?:-[A-Za-z]+)+$/;
const URL_RE = /^[a-z][a-z0-9+.-]*:\/\//i;
const IPV4_RE = /^\d{1,3}(?:\.\d{1,3}){3}$/;

function powershellTokens(word: string): string[] {
  const parts: string[] = [];
  for (const chunk of word.split("-")) {
    parts.push(...chunk.replace(/(?<=[a-z0-9])(?=[A-Z])/g, " ").split(" "));
  }
  return parts.filter(Boolean).map((p) => p.toLowerCase());
}

function liftArgument(arg: string, dnsMap: Record<string, string>,
                      rules: LiftingRules): string[] {
  if (URL_RE.test(arg)) {
    const rest = arg.split("://", 2)[1];
    const slash = rest.indexOf("/");
    const hostPart = slash < 0 ? rest : rest.slice(0, slash);
    const tail = slash < 0 ? "" : rest.slice(slash + 1);
    const host = hostPart.split(":")[0];
    const out: string[] = [];
    if (IPV4_RE.test(host)) {
      out.push(...liftIp(host, dnsMap, rules));
    } else {
      out.push(...tokensOf(host.split(".")[0]));
    }
    if (tail) out.push(...liftPath("/" + tail, "linux", rules));
    return out;
  }
  if (IPV4_RE.test(arg)) {
    if (arg.split(".").every((o) => Number(o) <= 255)) {
      return liftIp(arg, dnsMap, rules);
    }
    return tokensOf(arg);
  }
  if (arg.includes("/") || arg.includes("\\") || /^[a-zA-Z]:/.test(arg)
      || looksWindows(arg)) {
    return liftPath(arg, "linux", rules);
  }
  return tokensOf(arg);
}

export function liftCommand(cmdline: string, dnsMap: Record<string, string> = {},
                            rules?: LiftingRules): string[] {
  const table = rulesOrDefault(rules);
  if (!cmdline || !cmdline.trim()) return [];
  const parts = cmdline.match(CMD_TOKEN) ?? [];
  if (!parts.length) return [];
  const exeRaw = parts[0];
  const exe = exeRaw.replace(/\\/g, "/").split("/").pop()!.toLowerCase();
  let args = parts.slice(1);

  const out: string[] = [];
  const twoWord = args.length ? `${exe} ${args[0].toLowerCase()}` : "";
  if (twoWord && table.commandLookup.has(twoWord)) {
    out.push(...table.commandLookup.get(twoWord)!);
    args = args.slice(1);
  } else if (table.commandLookup.has(exe)) {
    out.push(...table.commandLookup.get(exe)!);
  } else if (POWERSHELL.test(exeRaw) && /[A-Z]/.test(exeRaw)) {
    out.push(...powershellTokens(exeRaw));
  } else {
    out.push(...tokensOf(exe));
  }

  for (let arg of args) {
    arg = arg.replace(/^["']+|["']+$/g, "");
    if (!arg || arg.startsWith("-") || WIN_SWITCH.test(arg)) continue;
    for (const tok of liftArgument(arg, dnsMap, table)) {
      if (/[a-z0-9]/.test(tok)) out.push(tok);
    }
  }
  return out;
}

export function liftSyscall(name: string, rules?: LiftingRules): string[] {
  const table = rulesOrDefault(rules);
  const low = name.trim().toLowerCase();
  const hit = table.syscalls.get(low);
  if (hit) return [...hit];
  const toks = tokensOf(low);
  return toks.length ? toks : [low];
}
