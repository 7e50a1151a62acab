"""Exception hierarchy.

Validation-type errors (bad inputs, malformed files, out-of-domain
parameters) map to CLI exit code 2; mathematical or resource infeasibility
(zero-probability conditioning, cap overruns, undefined divergences) maps to
exit code 3.
"""


class RediError(Exception):
    """Base class for all package errors."""


class ValidationError(RediError, ValueError):
    """Malformed input: bad tokens, negative weights, broken file syntax."""


class ConfigurationError(ValidationError):
    """Required configuration is missing or inconsistent (e.g. no mask token)."""


class EmptyCouplingError(ValidationError):
    """Coupling has no entries or no positive total weight."""


class DomainError(RediError, ValueError):
    """Parameter outside its mathematical domain (t outside [0,1], tau <= 0)."""


class ZeroMassError(RediError):
    """Conditioning event has zero probability."""


class OffPathError(RediError):
    """Query state has zero probability under the path at the given time."""


class InconsistentBridgeError(RediError):
    """Bridge queried at a (x_t, x0, x1, t) combination with zero path weight."""


class CapError(RediError):
    """A dense-enumeration or support-size cap was exceeded."""


class DivergenceError(RediError):
    """KL undefined: the first argument puts mass where the second has none."""


#: errors that signal infeasibility rather than bad usage
INFEASIBLE = (ZeroMassError, OffPathError, InconsistentBridgeError, CapError,
              DivergenceError)
