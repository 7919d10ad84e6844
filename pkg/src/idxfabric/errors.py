"""Exception hierarchy shared by all idxfabric modules."""


class IdxFabricError(Exception):
    """Base class for every error raised by this package."""


# --- address math ---

class PatternTooLong(IdxFabricError):
    """Bit pattern exceeds the 62-bit address budget."""


class CoordOutOfRange(IdxFabricError):
    pass


class AddressOutOfRange(IdxFabricError):
    pass


class LevelOutOfRange(IdxFabricError):
    pass


class EmptyBox(IdxFabricError):
    pass


# --- codec ---

class PrecisionOutOfRange(IdxFabricError):
    pass


class CorruptStream(IdxFabricError):
    pass


class BadMagic(IdxFabricError):
    pass


class BadVersion(IdxFabricError):
    pass


class CrcMismatch(IdxFabricError):
    pass


class LengthMismatch(IdxFabricError):
    pass


class DegenerateRange(IdxFabricError):
    pass


class ZeroSize(IdxFabricError):
    pass


# --- storage ---

class NotFound(IdxFabricError):
    pass


class IoFailure(IdxFabricError):
    pass


class Timeout(IdxFabricError):
    pass


# --- pipeline ---

class ShapeMismatch(IdxFabricError):
    pass


class ReplicaExists(IdxFabricError):
    pass


# --- fabric ---

class BadUri(IdxFabricError):
    pass


class BadDescriptor(IdxFabricError):
    pass


class UnreachableStore(IdxFabricError):
    pass


class BadQuery(IdxFabricError):
    pass


class EmptySelection(IdxFabricError):
    pass


class RefusedByPlan(IdxFabricError):
    """Raised by read paths when the planner returned a Refusal.

    The Refusal value is attached as .refusal so callers can inspect the
    violated constraints and the relaxation hint.
    """

    def __init__(self, refusal):
        self.refusal = refusal
        super().__init__(str(refusal))
