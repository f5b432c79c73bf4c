"""Exception types raised by the glvlab modules."""


class GlvError(Exception):
    """Base class for all glvlab errors."""


# -- geometry ---------------------------------------------------------------

class SelfIntersection(GlvError):
    """A boundary loop crosses itself."""


class DegenerateLoop(GlvError):
    """A loop has coincident consecutive vertices or fewer than 3 vertices."""


class MeshFailure(GlvError):
    """The mesher could not reach the requested resolution."""

    def __init__(self, message, achieved_h=None):
        super().__init__(message)
        self.achieved_h = achieved_h


# -- solver -----------------------------------------------------------------

class SingularSystem(GlvError):
    """A linear system has no interior unknowns."""


# -- vortex profile ---------------------------------------------------------

class ShootFailure(GlvError):
    """Bisection on the shooting slope failed to bracket."""


class OutOfTable(GlvError):
    """A radius lies outside the tabulated profile grid."""


# -- diagnostics ------------------------------------------------------------

class VanishingData(GlvError):
    """Boundary data has too small a modulus for a degree computation."""


class NonIntegerWinding(GlvError):
    """The winding sum is too far from an integer (under-resolved data)."""


class VanishingModulus(GlvError):
    """A field vanishes on a region where a polar decomposition was asked."""


class NonSimplyConnected(GlvError):
    """A subregion is not simply connected."""


class InconsistentPhase(GlvError):
    """Phase unwrapping produced a non-vanishing cycle sum."""


# -- scenarios --------------------------------------------------------------

class WindowTooLarge(GlvError):
    """Dipole window does not fit inside a flat boundary segment."""


class GeometryError(GlvError):
    """Scenario parameters are geometrically inconsistent."""


# -- cli --------------------------------------------------------------------

class ParseError(GlvError):
    """Config file could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(GlvError):
    """Config file parsed but contains an invalid or unknown entry."""

    def __init__(self, key, message=""):
        super().__init__(f"{key}: {message}" if message else str(key))
        self.key = key
