"""Exception types raised across the toolkit."""


class OsteonavError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


class NonSkewInput(OsteonavError, ValueError):
    pass


class InvalidTransform(OsteonavError, ValueError):
    pass


class MalformedStl(OsteonavError, ValueError):
    def __init__(self, offset, reason):
        super().__init__(f"malformed STL at byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class EmptyMesh(OsteonavError, ValueError):
    pass


class TooFewPoints(OsteonavError, ValueError):
    pass


class DegenerateCluster(OsteonavError, RuntimeError):
    pass


class SingularSystem(OsteonavError, RuntimeError):
    pass


class AmbiguousCorrespondence(OsteonavError, RuntimeError):
    pass


class InvalidTrackerModel(OsteonavError, ValueError):
    pass


class CollinearPoints(OsteonavError, ValueError):
    pass


class CountMismatch(OsteonavError, ValueError):
    pass


class TooFewPairs(OsteonavError, ValueError):
    pass


class InsufficientMotion(OsteonavError, ValueError):
    pass


class StaleMeasurement(OsteonavError, RuntimeError):
    pass


class MissingCalibration(OsteonavError, RuntimeError):
    pass


class RankDeficient(OsteonavError, ValueError):
    pass


class DegeneratePath(OsteonavError, ValueError):
    pass


class JointLimit(OsteonavError, ValueError):
    pass


class ScenarioDiverged(OsteonavError, RuntimeError):
    pass


class InvalidMessage(OsteonavError, ValueError):
    pass


class OversizePayload(OsteonavError, ValueError):
    pass


class ProtocolError(OsteonavError):
    """Undecodable bytes; drop ``skip`` bytes from the buffer to resynchronise."""

    KINDS = ("BadMagic", "BadVersion", "BadLength", "BadChecksum", "UnknownType", "BadPayload")

    def __init__(self, kind, skip, detail=""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind
        self.skip = skip
