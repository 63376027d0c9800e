"""Exception types shared across the package."""


class CrackfieldError(Exception):
    """Base class for all package-specific errors."""


class GridMismatch(CrackfieldError):
    """Two fields or a field and a mask live on incompatible grids."""


class SlitOffLattice(CrackfieldError):
    """Slit polyline is not an axis-aligned path along grid edges."""


class SlitTouchesBoundary(CrackfieldError):
    """Slit meets the domain boundary where it is not allowed to."""


class CenterOffLattice(CrackfieldError):
    """Rescaling center is not a (single-valued) grid node."""


class WindowTooCoarse(CrackfieldError):
    """Rescaling window spans too few source cells to be meaningful."""


class TipOffLattice(CrackfieldError):
    """Designated crack tip does not coincide with a grid node."""


class AnnulusEmpty(CrackfieldError):
    """No nodes fall inside the requested fitting annulus."""


class BoundaryPartitionInvalid(CrackfieldError):
    """Dirichlet/Neumann side assignment does not cover the boundary."""


class FloatingDomain(CrackfieldError):
    """A loaded region has no stiffness path to any Dirichlet node."""


class NoConvergence(CrackfieldError):
    """An iterative solver hit its iteration cap before its tolerance."""


class NoTipFound(CrackfieldError):
    """Tip auto-detection found no crack tip in the state."""


class NotDisconnecting(CrackfieldError):
    """The damage band fails to disconnect the loaded boundary part."""


class ProgramEmpty(CrackfieldError):
    """A load program with no time steps."""


class FormatError(CrackfieldError):
    """A field or snapshot file does not match the documented format."""


class ConfigError(CrackfieldError):
    """Run configuration is malformed; the message names the key."""
