"""Fidelity metrics computed on decoded traces."""

from .diagnostics import EVENTS, TcpEventCounts, load_event_counts, tcp_diagnostics
from .histograms import Histogram, coverage_adjusted_tv, tv_distance
from .report import (ShardSummary, compare, count_error, scalar_metrics, summarize_packets, summarize_records,
                     tcp_event_distance_pp)
from .sessions import SESSION_IDLE_US, CloseReason, SessionRecord, sessionize
from .structure import TransitionMatrix, interleaving_stats, transition_distance, transition_matrix

__all__ = [
    "EVENTS", "TcpEventCounts", "load_event_counts", "tcp_diagnostics", "Histogram", "coverage_adjusted_tv",
    "tv_distance", "ShardSummary", "compare", "count_error", "scalar_metrics", "summarize_packets",
    "summarize_records", "tcp_event_distance_pp", "SESSION_IDLE_US", "CloseReason", "SessionRecord",
    "sessionize", "TransitionMatrix", "interleaving_stats", "transition_distance", "transition_matrix",
]
