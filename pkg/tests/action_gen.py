"""Random (mostly illegal) action sequences for exercising permissive compilation."""

import random

from pktaction.lift import (ActionRecord, Direction, FlowEvent, LastDir, SeqSign, TcpCtrl, encode_digits)
from pktaction.packet import IpFamily, Proto, TcpOptProfile


def _digits(rng, n, big=False):
    if big or rng.random() < 0.1:
        return encode_digits(rng.randrange(16 ** n), n)
    return encode_digits(rng.choice([0, 0, 1, 100, 1460, rng.randrange(5000)]), n)


def random_action(rng: random.Random, tokens: int = 6) -> ActionRecord:
    proto = rng.choice([Proto.TCP, Proto.TCP, Proto.TCP, Proto.UDP, Proto.ICMP])
    mixed = rng.random() < 0.1  # deliberately put tcp/icmp fields on the wrong protocol
    tcpish = proto is Proto.TCP or mixed
    return ActionRecord(
        flow_token=rng.randrange(tokens),
        generation=rng.choice([0, 0, 0, 1, 2]),
        flow_evt=rng.choice(list(FlowEvent)),
        proto=proto,
        ip_family=rng.choice([IpFamily.V4, IpFamily.V4, IpFamily.V6]),
        dir=rng.choice(list(Direction)),
        tcp_ctrl=rng.choice(list(TcpCtrl)) if tcpish else TcpCtrl.NONE,
        tcp_opt_profile=rng.choice(list(TcpOptProfile)) if tcpish else TcpOptProfile.NONE,
        tcp_win_d=_digits(rng, 4) if tcpish else (0,) * 4,
        tcp_ack_adv_d=_digits(rng, 8, big=rng.random() < 0.2) if tcpish else (0,) * 8,
        tcp_ack_unseen=tcpish and rng.random() < 0.2,
        tcp_seq_delta_sign=rng.choice(list(SeqSign)) if tcpish else SeqSign.NONNEG,
        tcp_seq_delta_d=_digits(rng, 8, big=rng.random() < 0.2) if tcpish else (0,) * 8,
        ttl_res=rng.randrange(128),
        icmp_type=rng.randrange(256) if proto is Proto.ICMP or mixed else 0,
        icmp_code=rng.randrange(4) if proto is Proto.ICMP or mixed else 0,
        l4_payload_len_d=encode_digits(rng.choice([0, 0, 1, 64, 1448, 1460, rng.randrange(65536)]), 4),
        ctx_gap_b=rng.randrange(16),
        ctx_pkt_count_b=rng.randrange(9),
        ctx_last_payload_b=rng.randrange(8),
        ctx_ack_streak_b=rng.randrange(9),
        ctx_last_dir=rng.choice(list(LastDir)),
        delta_t_us=rng.randrange(0, 200_000),
    )


def random_sequence(seed: int, length: int | None = None) -> list[ActionRecord]:
    rng = random.Random(seed)
    n = length if length is not None else rng.randrange(1, 60)
    tokens = rng.randrange(1, 8)
    return [random_action(rng, tokens) for _ in range(n)]
