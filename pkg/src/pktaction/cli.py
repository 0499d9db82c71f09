"""Command-line entry point: ``pktaction <subcommand> ...``.

Exit status is 0 on success, 1 on bad input (unreadable files, schema
errors, bad flags) and 2 when a validation step finds violations.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import time
from collections import Counter
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .actionio import make_header, read_actions, write_actions
from .codec import IdentityCodec
from .compiler import CompileConfig, PayloadMode, compile_actions
from .errors import CompileError, PktActionError
from .lift import LiftConfig, lift_trace
from .metrics.report import compare, load_pairing, pcap_paths, report_csv, summarize_dir, summarize_records
from .packet import Skip, decode_frame, encode_frame
from .pcapio import PcapRecord, iter_records, read_pcap_file, write_pcap, write_pcap_file
from .shard import shard_trace, write_shards
from .synth import SynthConfig, generate
from .validate import validate_frames

log = logging.getLogger("pktaction")

EXIT_OK, EXIT_INPUT, EXIT_INVALID = 0, 1, 2
SALT_ENV = "PKTACTION_SALT"


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _int(text: str) -> int:
    return int(text, 0)


def _default_salt() -> int:
    raw = os.environ.get(SALT_ENV)
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise InputError(f"{SALT_ENV}={raw!r} is not an integer") from None


class Run:
    """Collects everything that goes into the run manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.timings: dict[str, float] = {}
        self.counters: dict = {}
        self.config: dict = {}
        self._t = self._start = time.perf_counter()

    def mark(self, stage: str) -> None:
        now = time.perf_counter()
        self.timings[stage] = round(now - self._t, 6)
        self._t = now

    def input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def output(self, path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def manifest(self, status: int) -> dict:
        return {
            "tool": "pktaction",
            "version": __version__,
            "subcommand": self.args.command,
            "argv": self.argv,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings_s": dict(self.timings, total=round(time.perf_counter() - self._start, 6)),
            "counters": self.counters,
            "exit_status": status,
        }


def _manifest_path(args) -> Path | None:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    out = getattr(args, "out", None)
    if not out:
        return None
    out = Path(out)
    if args.command in ("shard", "synth"):
        return out / "run_manifest.json"
    return out.with_name(out.name + ".manifest.json")


def _emit_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _decode_records(records: list[PcapRecord]):
    packets, skips = [], Counter()
    for r in records:
        pkt = decode_frame(r.data, r.ts_us)
        if isinstance(pkt, Skip):
            skips[pkt.reason.value] += 1
        else:
            packets.append(pkt)
    return packets, skips


def _read_input_pcap(run: Run, path):
    if not Path(path).is_file():
        raise InputError(f"no such file: {path}")
    run.input(path)
    records = read_pcap_file(path)
    packets, skips = _decode_records(records)
    run.counters["records"] = len(records)
    run.counters["skips"] = dict(sorted(skips.items()))
    return records, packets


def _lift_config(args) -> LiftConfig:
    return LiftConfig(slots=args.slots, idle_timeout_us=int(args.idle_timeout * 1_000_000))


def cmd_lift(args, run: Run) -> int:
    _, packets = _read_input_pcap(run, args.input)
    run.mark("read")
    cfg = _lift_config(args)
    run.config = asdict(cfg)
    actions, report = lift_trace(packets, cfg)
    run.mark("lift")
    run.counters.update(asdict(report))
    header = make_header(cfg.slots, cfg.digest(), report.first_ts_us, skips=run.counters["skips"])
    if args.out:
        with open(args.out, "w") as fh:
            write_actions(actions, fh, header)
        run.output(args.out)
    else:
        write_actions(actions, sys.stdout, header)
    run.mark("write")
    return EXIT_OK


def _compile_config(args, header) -> CompileConfig:
    epoch = args.epoch
    if epoch is None:
        epoch = (header or {}).get("epoch_us") or 0
    mode = PayloadMode.NONE if args.truncate else PayloadMode(args.payload)
    return CompileConfig(salt=args.salt, epoch_us=epoch, payload_mode=mode, strict=args.strict)


def _read_actions_file(run: Run, path):
    if not Path(path).is_file():
        raise InputError(f"no such file: {path}")
    run.input(path)
    with open(path) as fh:
        return read_actions(fh)


def cmd_compile(args, run: Run) -> int:
    header, actions = _read_actions_file(run, args.input)
    run.mark("read")
    cfg = _compile_config(args, header)
    run.config = {"salt": cfg.salt, "epoch_us": cfg.epoch_us, "payload_mode": cfg.payload_mode.value,
                  "strict": cfg.strict, "truncate": args.truncate}
    try:
        result = compile_actions(actions, cfg)
    except CompileError as exc:
        log.error("strict compile rejected the action file: %s", exc)
        run.counters["compile_error"] = {"index": exc.index, "reason": exc.reason}
        return EXIT_INVALID
    run.mark("compile")
    run.counters.update(result.report.to_dict())
    frames = ((p.ts_us, encode_frame(p)) for p in result.packets)
    if args.out:
        write_pcap_file(args.out, frames, truncate_payload=args.truncate)
        run.output(args.out)
    else:
        sys.stdout.buffer.write(write_pcap(frames, truncate_payload=args.truncate))
        sys.stdout.buffer.flush()
    run.mark("write")
    return EXIT_OK


def _first_mismatch(a, b):
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            dx, dy = x.to_dict(), y.to_dict()
            return {"index": i, "fields": sorted(k for k in dx if dx[k] != dy[k])}
    if len(a) != len(b):
        return {"index": min(len(a), len(b)), "fields": ["<length>"]}
    return None


def cmd_roundtrip(args, run: Run) -> int:
    records, packets = _read_input_pcap(run, args.input)
    run.mark("read")
    lcfg = _lift_config(args)
    actions, lreport = lift_trace(packets, lcfg)
    run.mark("lift")
    codec = IdentityCodec()
    decoded = codec.decode(codec.encode(actions))
    ccfg = CompileConfig(salt=args.salt, epoch_us=lreport.first_ts_us or 0)
    run.config = {"lift": asdict(lcfg), "salt": ccfg.salt, "epoch_us": ccfg.epoch_us, "codec": codec.name}
    result = compile_actions(decoded, ccfg)
    run.mark("compile")
    blob = write_pcap((p.ts_us, encode_frame(p)) for p in result.packets)
    if args.out:
        Path(args.out).write_bytes(blob)
        run.output(args.out)
    out_records = list(iter_records(io.BytesIO(blob)))
    frames = [(r.ts_us, r.data) for r in out_records]
    relifted, _ = lift_trace(_decode_records(out_records)[0], lcfg)
    run.mark("relift")
    exact = sum(x == y for x, y in zip(actions, relifted))
    unseen = [decoded[i].tcp_ack_unseen for i in result.action_indices]
    validation = validate_frames(frames, unseen)
    run.mark("validate")
    ref = {"trace": summarize_records(records)}
    dec = {"trace": summarize_records(out_records)}
    metrics = compare(ref, dec)
    run.mark("metrics")
    report = {
        "actions": len(actions),
        "relifted_actions": len(relifted),
        "exact_match": exact,
        "exact_match_rate": exact / len(actions) if actions else 1.0,
        "first_mismatch": _first_mismatch(actions, relifted),
        "lift": asdict(lreport),
        "compile": result.report.to_dict(),
        "validation": validation.to_dict(),
        "metrics": metrics["aggregate"]["metrics"],
        "interleaving": {"ref": metrics["aggregate"]["ref"]["interleaving"],
                         "dec": metrics["aggregate"]["dec"]["interleaving"]},
    }
    run.counters.update({"exact_match": exact, "actions": len(actions), "violations": len(validation.violations),
                         "evictions": lreport.evictions, "coercions": result.report.to_dict()["coercions_total"]})
    _emit_json(report, args.report)
    if args.report:
        run.output(args.report)
    return EXIT_OK if validation.ok else EXIT_INVALID


def _summaries(run: Run, path, jobs: int):
    p = Path(path)
    if p.is_file():
        run.input(p)
        return {"trace": summarize_records(read_pcap_file(p))}
    if not p.is_dir():
        raise InputError(f"no such file or directory: {path}")
    for f in pcap_paths(p).values():
        run.input(f)
    return summarize_dir(p, jobs)


def cmd_metrics(args, run: Run) -> int:
    ref = _summaries(run, args.ref, args.jobs)
    dec = _summaries(run, args.dec, args.jobs)
    run.mark("summarize")
    pairs = None
    if args.pairs:
        if not Path(args.pairs).is_file():
            raise InputError(f"no such file: {args.pairs}")
        run.input(args.pairs)
        try:
            pairs = load_pairing(json.loads(Path(args.pairs).read_text()))
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{args.pairs}: malformed pairing manifest ({exc})") from None
    run.config = {"ref": str(args.ref), "dec": str(args.dec), "pairs": args.pairs, "jobs": args.jobs}
    report = compare(ref, dec, pairs)
    run.mark("compare")
    run.counters.update({"pairs": len(report["per_shard"])})
    _emit_json(report, args.out)
    if args.out:
        run.output(args.out)
    if args.csv:
        Path(args.csv).write_text(report_csv(report))
        run.output(args.csv)
    return EXIT_OK


def _fractions(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated fractions, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated fractions, got {text!r}")
    return parts


def cmd_shard(args, run: Run) -> int:
    _, packets = _read_input_pcap(run, args.input)
    run.mark("read")
    plan, groups = shard_trace(packets, args.budget, args.splits)
    run.mark("plan")
    run.config = {"budget": args.budget, "splits": list(args.splits), "jobs": args.jobs}
    manifest = write_shards(args.out, plan, groups, args.jobs)
    run.mark("write")
    for info in plan.shards:
        run.output(Path(args.out) / info.filename)
    run.output(manifest)
    run.counters.update({"shards": len(plan.shards), "packets": sum(len(g) for g in groups),
                         "oversized": sum(s.oversized for s in plan.shards), "warnings": len(plan.warnings),
                         "splits": {k: v[1] - v[0] for k, v in plan.splits.items()}})
    return EXIT_OK


def cmd_synth(args, run: Run) -> int:
    try:
        cfg = SynthConfig(
            seed=args.seed, tcp_flows=args.tcp_flows, udp_flows=args.udp_flows, icmp_flows=args.icmp_flows,
            v6_fraction=args.v6_fraction, retransmission_rate=args.retransmission_rate,
            reorder_rate=args.reorder_rate, zero_window_rate=args.zero_window_rate,
            duration_us=int(args.duration * 1_000_000), iat_scale_us=args.iat_scale_us,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    run.config = asdict(cfg)
    result = generate(cfg)
    run.mark("generate")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pcap, truth = out / "synth.pcap", out / "truth.json"
    write_pcap_file(pcap, ((p.ts_us, encode_frame(p)) for p in result.packets))
    truth.write_text(json.dumps(result.manifest(cfg), indent=2) + "\n")
    run.mark("write")
    run.output(pcap)
    run.output(truth)
    run.counters.update({"packets": len(result.packets), "flows": len(result.flows)})
    return EXIT_OK


def cmd_validate(args, run: Run) -> int:
    if not Path(args.input).is_file():
        raise InputError(f"no such file: {args.input}")
    run.input(args.input)
    records = read_pcap_file(args.input)
    frames = [(r.ts_us, r.data) for r in records]
    unseen = None
    if args.actions:
        _, actions = _read_actions_file(run, args.actions)
        # drops do not depend on the salt, so a default compile recovers the packet-to-action map
        indices = compile_actions(actions).action_indices
        if len(indices) != len(frames):
            raise InputError(f"{args.actions} compiles to {len(indices)} packets but {args.input} has {len(frames)}")
        unseen = [actions[i].tcp_ack_unseen for i in indices]
    run.mark("read")
    report = validate_frames(frames, unseen)
    run.mark("validate")
    run.counters.update({"packets": len(frames), "violations": len(report.violations)})
    run.config = {"actions": args.actions}
    _emit_json(report.to_dict(), args.out)
    if args.out:
        run.output(args.out)
    if not report.ok:
        log.error("%d violations in %s", len(report.violations), args.input)
        return EXIT_INVALID
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pktaction", description="Packet action lifting, compilation and fidelity metrics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_help):
        p.add_argument("--out", help=out_help)
        p.add_argument("--manifest", help="run manifest path (default: next to --out, else stderr)")
        p.add_argument("--jobs", type=int, default=1, help="worker count for per-shard work")

    def lift_opts(p):
        p.add_argument("--slots", type=int, default=LiftConfig.slots, help="flow slot vocabulary size V")
        p.add_argument("--idle-timeout", type=float, default=LiftConfig.idle_timeout_us / 1e6,
                       help="seconds before an idle non-TCP flow releases its slot")

    p = sub.add_parser("lift", help="pcap to action JSON Lines")
    p.add_argument("input")
    common(p, "action file (default stdout)")
    lift_opts(p)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("compile", help="action JSON Lines to pcap")
    p.add_argument("input")
    common(p, "output pcap (default stdout)")
    p.add_argument("--salt", type=_int, default=None, help=f"FlowTable salt (default ${SALT_ENV} or 0)")
    p.add_argument("--truncate", action="store_true", help="write headers only, keeping original lengths")
    p.add_argument("--strict", action="store_true", help="fail on the first illegal action instead of coercing")
    p.add_argument("--epoch", type=int, default=None, help="first timestamp in microseconds (default from header)")
    p.add_argument("--payload", choices=[m.value for m in PayloadMode], default=PayloadMode.SYNTHETIC.value)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("roundtrip", help="lift, compile, re-lift and compare")
    p.add_argument("input")
    common(p, "also keep the compiled pcap here")
    p.add_argument("--salt", type=_int, default=None)
    p.add_argument("--report", help="roundtrip report JSON (default stdout)")
    lift_opts(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("metrics", help="compare reference and decoded shard sets")
    p.add_argument("--ref", required=True, help="pcap file or directory of shard pcaps")
    p.add_argument("--dec", required=True, help="pcap file or directory of shard pcaps")
    p.add_argument("--pairs", help="pairing manifest JSON")
    p.add_argument("--csv", help="also write a flat CSV of the scalar metrics")
    common(p, "report JSON (default stdout)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("shard", help="session-preserving sharding and split assignment")
    p.add_argument("input")
    p.add_argument("--budget", type=int, required=True, help="max packets per shard")
    p.add_argument("--splits", type=_fractions, default=(0.8, 0.1, 0.1), help="train,val,test fractions")
    common(p, "output directory")
    p.set_defaults(func=cmd_shard)

    p = sub.add_parser("synth", help="generate a synthetic trace with ground truth")
    d = SynthConfig()
    p.add_argument("--seed", type=_int, default=d.seed)
    p.add_argument("--tcp-flows", type=int, default=d.tcp_flows)
    p.add_argument("--udp-flows", type=int, default=d.udp_flows)
    p.add_argument("--icmp-flows", type=int, default=d.icmp_flows)
    p.add_argument("--v6-fraction", type=float, default=d.v6_fraction)
    p.add_argument("--retransmission-rate", type=float, default=d.retransmission_rate)
    p.add_argument("--reorder-rate", type=float, default=d.reorder_rate)
    p.add_argument("--zero-window-rate", type=float, default=d.zero_window_rate)
    p.add_argument("--duration", type=float, default=d.duration_us / 1e6, help="flow arrival window in seconds")
    p.add_argument("--iat-scale-us", type=int, default=d.iat_scale_us)
    common(p, "output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="legality check of a compiled pcap")
    p.add_argument("input")
    p.add_argument("--actions", help="source action file, to honor tcp_ack_unseen flags")
    common(p, "validation report JSON (default stdout)")
    p.set_defaults(func=cmd_validate)
    return parser


_REQUIRED_OUT = ("shard", "synth")


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in _REQUIRED_OUT and not args.out:
        parser.error(f"{args.command} requires --out DIR")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    run = Run(args, argv)
    try:
        if hasattr(args, "salt") and args.salt is None:
            args.salt = _default_salt()
        status = args.func(args, run)
    except (InputError, PktActionError, OSError, ValueError) as exc:
        print(f"pktaction {args.command}: error: {exc}", file=sys.stderr)
        status = EXIT_INPUT
        run.counters["error"] = str(exc)
    manifest = run.manifest(status)
    path = _manifest_path(args)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(manifest, indent=2) + "\n")
        except OSError as exc:
            print(f"pktaction: cannot write manifest {path}: {exc}", file=sys.stderr)
    else:
        print(json.dumps(manifest, sort_keys=True), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
