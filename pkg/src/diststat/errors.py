"""Exception hierarchy shared by all subpackages."""


class DistStatError(Exception):
    """Base class for every error raised by diststat."""


class ProtocolError(DistStatError):
    """Ranks disagree about which collective they are in, or a peer vanished."""


class PeerLost(ProtocolError):
    """A peer's connection closed mid-collective, usually because it failed."""


class SizeError(DistStatError, ValueError):
    """Buffer lengths passed to a collective are inconsistent."""


class WorldError(DistStatError):
    """A rank failed; the whole world was aborted.

    ``rank`` names the first rank whose program raised.
    """

    def __init__(self, rank, message):
        super().__init__(f"rank {rank} failed: {message}")
        self.rank = rank
        self.message = message

    @property
    def error_type(self):
        """Class name of the exception the failing rank raised."""
        return self.message.split(":", 1)[0].strip()


class WorldAborted(DistStatError):
    """Raised inside surviving ranks when another rank has failed."""


class PartitionError(DistStatError, ValueError):
    """A split dimension is not a multiple of the world size, or partitions clash."""


class ShapeError(DistStatError, ValueError):
    """Incompatible global shapes."""


class DispatchError(DistStatError):
    """No multiplication scenario matches the given partition triple."""


class ConfigError(DistStatError, ValueError):
    """Invalid solver or run configuration (e.g. step sizes violating a bound)."""


class ContractError(DistStatError, ValueError):
    """Input data violates an operation's precondition."""


class IterationError(DistStatError, RuntimeError):
    """An iterative method failed to converge within its budget."""


class MonotonicityError(DistStatError, RuntimeError):
    """An MM iteration increased its objective beyond the allowed slack."""
