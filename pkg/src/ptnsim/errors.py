"""Exception hierarchy shared by all ptnsim modules."""


class PtnError(Exception):
    """Base class for every error raised by ptnsim."""


# keycore
class LengthMismatch(PtnError, ValueError):
    pass


class MissingKey(PtnError, LookupError):
    pass


class EmptyKey(PtnError, ValueError):
    pass


class EmptyDerivation(PtnError, ValueError):
    pass


class ArityMismatch(PtnError, ValueError):
    pass


class CorrespondenceError(PtnError, ValueError):
    pass


# adversary
class UnknownSatellite(PtnError, KeyError):
    pass


class TooLargeForOracle(PtnError, ValueError):
    pass


# qkdsession
class InsufficientSample(PtnError, ValueError):
    pass


# orbitpass
class InvalidOrbit(PtnError, ValueError):
    pass


class InvalidGeometry(PtnError, ValueError):
    pass


# channel
class InvalidChannel(PtnError, ValueError):
    pass


class BelowHorizon(PtnError, ValueError):
    pass


class ScenarioError(PtnError, ValueError):
    """Scenario document failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
