"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes do not line up."""


class NumericError(ArithmeticError):
    """A NaN or Inf showed up where finite values are required."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class CodecError(ValueError):
    """Flat weight vector does not match the shape it is being mapped to."""

    def __init__(self, message, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class ConfigError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """Federated round received the wrong set of updates."""


class PrepassError(RuntimeError):
    def __init__(self, message, collaborator_id=None):
        super().__init__(message)
        self.collaborator_id = collaborator_id


class ParseError(ValueError):
    """Malformed binary file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset
