"""Packet-action codec toolchain.

Lift PCAP traces into per-packet action records, compile action records back
into synthetic state-consistent PCAPs, and compare decoded traces against
their references.
"""

__version__ = "0.1.0"
