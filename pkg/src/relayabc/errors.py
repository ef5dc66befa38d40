"""Exception hierarchy shared across the package."""


class RelayABCError(Exception):
    """Base class for all package errors."""


class NotStronglyConnected(RelayABCError):
    pass


class TooLarge(RelayABCError):
    pass


class NoSource(RelayABCError):
    pass


class BadCardinality(RelayABCError):
    pass


class ConfigInvalid(RelayABCError):
    """A scenario violates one of the protocol's preconditions.

    ``assumption`` names the violated precondition so callers (and the CLI)
    can report it without parsing the message.
    """

    assumption = "config"

    def __init__(self, message: str, assumption: str | None = None):
        super().__init__(message)
        if assumption is not None:
            self.assumption = assumption


class TooManyByzantine(ConfigInvalid):
    assumption = "byzantine_fraction"


class HonestSubgraphDisconnected(ConfigInvalid):
    assumption = "honest_connectivity"


class DiameterBoundViolated(ConfigInvalid):
    assumption = "diameter_bound"


class HorizonTooShort(ConfigInvalid):
    assumption = "horizon"


class InconsistentTrace(RelayABCError):
    pass


class TraceCorrupt(RelayABCError):
    pass


class PhaseTooEarly(RelayABCError):
    pass


class IndexOutOfRange(RelayABCError, IndexError):
    pass
