"""Exception types shared across the numerical modules."""


class HbmcError(Exception):
    """Base class for all package errors."""


class NonConvergence(HbmcError):
    """Adaptive quadrature exhausted its subdivision budget."""


class TimeTooSmall(HbmcError):
    """Oscillatory kernel evaluation requested below the supported time."""


class DegenerateRadius(HbmcError):
    """Radial-derivative recursion requested too close to r = 0."""


class UnsupportedOrder(HbmcError):
    """Convolution series term requested beyond the supported depth."""


class OutOfTable(HbmcError):
    """Table-defined drift queried outside its grid hull."""


class ConfigError(HbmcError):
    """Run configuration failed validation."""

    def __init__(self, message, section=None, key=None):
        self.section = section
        self.key = key
        loc = ""
        if section is not None:
            loc = f"[{section}]"
            if key is not None:
                loc += f" {key}"
            loc += ": "
        super().__init__(loc + message)
