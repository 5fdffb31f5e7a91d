class VoltdropError(Exception):
    pass


class ConfigError(VoltdropError):
    """Invalid or infeasible configuration. ``line`` is set when parsing a config file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IllegalTransition(VoltdropError):
    pass


class GeometryError(VoltdropError):
    pass


class ProtocolError(VoltdropError):
    pass


class AnalysisError(VoltdropError):
    pass
