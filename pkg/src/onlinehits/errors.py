class OnlineHitsError(Exception):
    pass


class ParseError(OnlineHitsError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EventError(OnlineHitsError):
    """An update event violates its preconditions against the store."""

    def __init__(self, message, seq=None):
        self.seq = seq
        if seq is not None:
            message = f"event {seq}: {message}"
        super().__init__(message)


class NoModelError(OnlineHitsError):
    def __init__(self, message="empty model"):
        super().__init__(message)
