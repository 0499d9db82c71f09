"""Exception hierarchy shared by all modules."""


class PktActionError(Exception):
    """Base class for every error raised by this package."""


class PacketError(PktActionError, ValueError):
    """A CanonicalPacket violates its structural invariants."""


class PcapError(PktActionError):
    pass


class UnsupportedFormatError(PcapError):
    pass


class UnsupportedLinktypeError(PcapError):
    pass


class TruncatedFileError(PcapError):
    def __init__(self, offset: int, message: str = ""):
        self.offset = offset
        super().__init__(message or f"truncated pcap record at byte offset {offset}")


class OrderingError(PktActionError, ValueError):
    """Timestamps went backwards where nondecreasing order is required."""


class ActionParseError(PktActionError, ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ActionSchemaError(PktActionError, ValueError):
    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}field {field!r}: {message}")


class CompileError(PktActionError):
    """Strict-mode compilation hit an action that is illegal under current state."""

    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"action {index}: {reason}")


class HistogramSchemaError(PktActionError, ValueError):
    pass


class PairingError(PktActionError):
    def __init__(self, shard_id: str, message: str = ""):
        self.shard_id = shard_id
        super().__init__(message or f"shard {shard_id!r} has no partner")
