class LinkSpyError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LinkSpyError, ValueError):
    """A configuration value is missing, malformed or out of range.

    ``field`` names the offending parameter.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class RoutingError(LinkSpyError):
    """No link joins the requested source and destination GPUs."""


class SimulationError(LinkSpyError):
    """The simulator was driven out of order (e.g. time moved backwards)."""


class EncodingError(LinkSpyError, ValueError):
    pass


class FramingError(LinkSpyError, ValueError):
    pass


class SyncTimeout(LinkSpyError):
    """The receiver never saw a preamble within its slot budget."""


class TruncationError(LinkSpyError):
    """The decoded length header points past the end of the observed slots."""


class CalibrationError(LinkSpyError, ValueError):
    pass


class DatasetError(LinkSpyError, ValueError):
    pass
