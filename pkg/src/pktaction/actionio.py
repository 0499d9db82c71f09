"""JSON Lines action files.

The optional first line is a header object carrying ``schema_version``;
every other line is one action with the field names of
:class:`~pktaction.lift.ActionRecord` and digit fields as integer arrays.
"""

from __future__ import annotations

import io
import json
from dataclasses import fields
from typing import IO, Iterable

from .errors import ActionParseError, ActionSchemaError
from .lift import ActionRecord, Direction, FlowEvent, LastDir, SeqSign, TcpCtrl
from .packet import IpFamily, Proto, TcpOptProfile

SCHEMA_VERSION = 1

_ENUMS = {
    "flow_evt": FlowEvent, "proto": Proto, "ip_family": IpFamily, "dir": Direction,
    "tcp_ctrl": TcpCtrl, "tcp_opt_profile": TcpOptProfile, "tcp_seq_delta_sign": SeqSign,
    "ctx_last_dir": LastDir,
}
_DIGITS = {"tcp_win_d": 4, "tcp_ack_adv_d": 8, "tcp_seq_delta_d": 8, "l4_payload_len_d": 4}
# inclusive upper bounds for plain integer fields
_INT_RANGES = {
    "flow_token": 0xFFFF, "generation": 0xFFFFFFFF, "ttl_res": 127, "icmp_type": 255, "icmp_code": 255,
    "ctx_gap_b": 15, "ctx_pkt_count_b": 8, "ctx_last_payload_b": 7, "ctx_ack_streak_b": 8,
    "delta_t_us": (1 << 64) - 1,
}
FIELD_NAMES = tuple(f.name for f in fields(ActionRecord))


def make_header(slots: int, config_hash: str, epoch_us: int | None = None, **extra) -> dict:
    header = {"schema_version": SCHEMA_VERSION, "V": slots, "config_hash": config_hash}
    if epoch_us is not None:
        header["epoch_us"] = epoch_us
    header.update(extra)
    return header


def write_actions(actions: Iterable[ActionRecord], stream: IO[str] | None = None,
                  header: dict | None = None) -> str | None:
    """Write actions as JSON Lines. Returns the text when no stream is given."""
    out = stream if stream is not None else io.StringIO()
    if header is not None:
        out.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
    for action in actions:
        out.write(json.dumps(action.to_dict(), separators=(",", ":")) + "\n")
    return out.getvalue() if stream is None else None


def action_from_dict(obj: dict, line: int | None = None) -> ActionRecord:
    values = {}
    for name in FIELD_NAMES:
        if name not in obj:
            raise ActionSchemaError(name, "missing", line)
        raw = obj[name]
        if name in _ENUMS:
            try:
                values[name] = _ENUMS[name](raw)
            except ValueError:
                raise ActionSchemaError(name, f"unknown value {raw!r}", line) from None
        elif name in _DIGITS:
            n = _DIGITS[name]
            if (not isinstance(raw, list) or len(raw) != n
                    or any(type(d) is not int or not 0 <= d < 16 for d in raw)):
                raise ActionSchemaError(name, f"expected {n} digits in [0, 16), got {raw!r}", line)
            values[name] = tuple(raw)
        elif name == "tcp_ack_unseen":
            if type(raw) is not bool:
                raise ActionSchemaError(name, "expected a boolean", line)
            values[name] = raw
        else:
            if type(raw) is not int or not 0 <= raw <= _INT_RANGES[name]:
                raise ActionSchemaError(name, f"expected an integer in [0, {_INT_RANGES[name]}]", line)
            values[name] = raw
    extra = set(obj) - set(FIELD_NAMES)
    if extra:
        raise ActionSchemaError(sorted(extra)[0], "unknown field", line)
    return ActionRecord(**values)


def read_actions(stream: IO[str] | str) -> tuple[dict | None, list[ActionRecord]]:
    """Parse an action file into ``(header, actions)``; header is None when absent."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    header = None
    actions = []
    for lineno, text in enumerate(stream, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ActionParseError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ActionParseError(lineno, "expected a JSON object")
        if "schema_version" in obj:
            if actions or header is not None:
                raise ActionParseError(lineno, "header must be the first line")
            if obj["schema_version"] != SCHEMA_VERSION:
                raise ActionSchemaError("schema_version", f"unsupported version {obj['schema_version']!r}", lineno)
            header = obj
            continue
        actions.append(action_from_dict(obj, lineno))
    return header, actions
