"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 invalid scenario or input file,
3 simulation finished without a key (NO_KEY).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .adversary import (
    MAX_ORACLE_SATELLITES,
    conditional_key_distribution,
    eve_view,
    oracle_verdict,
    security_verdict,
)
from .errors import PtnError, ScenarioError
from .keycore import KeyMaterial, ParityRecord, derive_final_key, derive_matched_final_key, recover_final_peer_key
from .ogscompat import fleet_matrix
from .orbitpass import find_passes
from .scenario import ScenarioConfig, load_scenario, validate_scenario
from .simnet import metrics_text, report_metrics, run

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NO_KEY = 0, 1, 2, 3

KEY_STORE_FIELDS = ["node_id", "peer_id", "session_id", "length_bits", "key_hex"]

__all__ = ["main", "validate_scenario"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _rows_text(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() + "\n" for r in cells)


def _config(args) -> ScenarioConfig:
    try:
        cfg = load_scenario(args.scenario)
    except ScenarioError as exc:
        raise ScenarioError([f"{args.scenario}: {v}" for v in exc.violations]) from exc
    compromised = None
    if getattr(args, "compromised", None) is not None:
        compromised = [s for s in args.compromised.split(",") if s]
        unknown = [s for s in compromised if s not in cfg.satellite_ids]
        if unknown:
            raise ScenarioError([f"--compromised: unknown satellite id(s) {', '.join(unknown)}"])
    return cfg.with_overrides(master_seed=args.seed, horizon_s=args.horizon, compromised=compromised)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    report = run(cfg)
    if args.format == "json":
        _emit(report.to_json(), args.out)
    else:
        text = metrics_text(report_metrics(report))
        for node, key in sorted(report.final_keys.items()):
            text += f"final_key[{node}]  {key.to_hex()}\n"
        _emit(text, args.out)
    if args.csv:
        Path(args.csv).write_text(report.sessions_csv())
    if args.parities:
        Path(args.parities).write_text("".join(p.to_line() + "\n" for p in report.parities))
    if args.key_store:
        write_key_store(args.key_store, report.key_store_rows())
    return EXIT_NO_KEY if report.status == "NO_KEY" else EXIT_OK


def cmd_passes(args) -> int:
    cfg = _config(args)
    rows = []
    for sat in cfg.satellites:
        for ogs in cfg.ogs:
            for w in find_passes(sat.orbit, ogs.site, 0.0, cfg.horizon_s, cfg.scan_step_s, sat.id, ogs.id):
                rows.append(w.to_dict())
    rows.sort(key=lambda r: (r["t_start"], r["satellite_id"], r["ogs_id"]))
    cols = ["satellite_id", "ogs_id", "t_start", "t_end", "max_elevation_deg"]
    if args.format == "json":
        _emit(json.dumps([{c: r[c] for c in cols} for r in rows], indent=2) + "\n", args.out)
    else:
        _emit(_rows_text(cols, [[r[c] for c in cols] for r in rows]), args.out)
    return EXIT_OK


def cmd_compat(args) -> int:
    cfg = _config(args)
    matrix = fleet_matrix([(o.id, o.spec) for o in cfg.ogs], [(s.id, s.spec) for s in cfg.satellites])
    if args.format == "json":
        sys.stdout.write(matrix.to_json())
    else:
        sys.stdout.write(matrix.to_text())
    if args.out:
        Path(args.out).write_text(matrix.to_json())
    return EXIT_OK


def cmd_adversary(args) -> int:
    cfg = _config(args)
    report = run(cfg)
    sats = report.participating
    doc = {
        "scenario": cfg.name,
        "compromised": sorted(cfg.adversary.compromised),
        "participating_satellites": sats,
        "verdict": security_verdict(cfg.adversary, sats).value,
        "oracle": None,
    }
    if 0 < len(sats) <= MAX_ORACLE_SATELLITES:
        view = eve_view(cfg.adversary, report.transcripts, report.parities, cfg.satellite_ids)
        dist = conditional_key_distribution(view, len(sats), args.oracle_bits)
        doc["oracle"] = {
            "key_bits": args.oracle_bits,
            "uniform": dist.is_uniform(),
            "entropy_bits": dist.entropy(),
            "verdict": oracle_verdict(dist).value,
            "distribution": dist.table(),
        }
    if args.format == "json":
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    else:
        lines = [
            f"scenario      {doc['scenario']}",
            f"compromised   {','.join(doc['compromised']) or '-'}",
            f"satellites    {','.join(sats) or '-'}",
            f"verdict       {doc['verdict']}",
        ]
        if doc["oracle"]:
            o = doc["oracle"]
            lines.append(f"oracle        first {o['key_bits']} bits, entropy {o['entropy_bits']:.4f}, {o['verdict']}")
            lines += [f"  {r['final_key']}  {r['count']}  {r['probability']:.6f}" for r in o["distribution"]]
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if sats else EXIT_NO_KEY


def read_key_store(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in KEY_STORE_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ScenarioError([f"{path}: key store lacks column(s) {', '.join(missing)}"])
        return list(reader)


def write_key_store(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, KEY_STORE_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_derive_key(args) -> int:
    rows = [r for r in read_key_store(args.keys) if r["node_id"] == args.node]
    if not rows:
        raise ScenarioError([f"{args.keys}: no keys for node {args.node!r}"])

    def key_of(row, where):
        try:
            return KeyMaterial.from_hex(row["key_hex"], int(row["length_bits"]), row["session_id"])
        except (ValueError, PtnError) as exc:
            raise ScenarioError([f"{where}: key_hex/length_bits invalid ({exc})"]) from exc

    out = {"node_id": args.node}
    if args.parities:
        parities = []
        for i, line in enumerate(Path(args.parities).read_text().splitlines()):
            if line.strip():
                try:
                    parities.append(ParityRecord.from_line(line))
                except (ValueError, KeyError) as exc:
                    raise ScenarioError([f"{args.parities}:{i + 1}: bad parity record ({exc})"]) from exc
        parities.sort(key=lambda p: p.satellite_id)
        by_session = {r["session_id"]: r for r in rows}
        own = []
        for p in parities:
            sid = p.session_a_id if args.node == p.ogs_a_id else p.session_b_id
            if sid not in by_session:
                raise ScenarioError([f"{args.keys}: node {args.node!r} has no key for session {sid!r}"])
            own.append(key_of(by_session[sid], f"{args.keys} session {sid}"))
        sats = [p.satellite_id for p in parities]
        final = derive_matched_final_key(own, parities, sats)
        peer = recover_final_peer_key(own, parities, sats)
        out.update(satellites=sats, final_key_hex=final.to_hex(), length_bits=final.length,
                   peer_key_hex=peer.to_hex())
    else:
        first = {}
        for r in rows:
            first.setdefault(r["peer_id"], r)
        peers = sorted(first)
        final = derive_final_key([key_of(first[p], f"{args.keys} peer {p}") for p in peers])
        out.update(satellites=peers, final_key_hex=final.to_hex(), length_bits=final.length)
    if args.format == "json":
        _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    else:
        _emit("".join(f"{k}  {','.join(v) if isinstance(v, list) else v}\n" for k, v in out.items()), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptnsim", description="Parallel trusted-node satellite QKD simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario file or shipped scenario name")
            p.add_argument("--seed", type=int, help="override master_seed")
            p.add_argument("--horizon", type=float, help="override horizon_s")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("simulate", help="run the relay simulation")
    common(p)
    p.add_argument("--compromised", help="comma-separated satellite ids; overrides the scenario adversary")
    p.add_argument("--csv", help="write per-session rows to this CSV file")
    p.add_argument("--parities", help="write parity records (JSON lines) to this file")
    p.add_argument("--key-store", help="write every key pool entry to this CSV file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("passes", help="list pass windows for every satellite/OGS pair")
    common(p)
    p.set_defaults(func=cmd_passes)

    p = sub.add_parser("compat", help="OGS/satellite compatibility matrix")
    common(p)
    p.set_defaults(func=cmd_compat)

    p = sub.add_parser("adversary-analysis", help="security verdict and small-key oracle")
    common(p)
    p.add_argument("--compromised", help="comma-separated satellite ids; overrides the scenario adversary")
    p.add_argument("--oracle-bits", type=int, default=2, choices=range(1, 9), metavar="{1..8}")
    p.set_defaults(func=cmd_adversary)

    p = sub.add_parser("derive-key", help="derive a final key from key-store and parity files")
    common(p, scenario=False)
    p.add_argument("--keys", required=True, help="key store CSV")
    p.add_argument("--node", required=True, help="node whose final key to derive")
    p.add_argument("--parities", help="parity records (JSON lines)")
    p.set_defaults(func=cmd_derive_key)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PtnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
