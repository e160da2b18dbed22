"""Exception types shared across the package."""


class PanelFuseError(Exception):
    """Base class for all panelfuse errors."""


class PanelFormatError(PanelFuseError):
    """A panel or assignment file violates the CSV contract (carries row info)."""


class ConfigError(PanelFuseError):
    """Engine configuration is malformed."""


class SchemaMismatchError(PanelFuseError):
    """Two panels do not share the same feature schema."""


class UniverseMismatchError(PanelFuseError):
    """Panel weight totals differ beyond tolerance."""

    def __init__(self, left_total: float, right_total: float, tolerance: float):
        self.left_total = left_total
        self.right_total = right_total
        self.tolerance = tolerance
        super().__init__(
            f"universe mismatch: left total {left_total!r} vs right total "
            f"{right_total!r} (relative tolerance {tolerance!r})"
        )


class QuantizationError(PanelFuseError):
    """Weight quantization could not preserve totals without breaking a panelist."""


class CostOverflowError(PanelFuseError):
    """Cost magnitudes would not fit the solver's 64-bit arithmetic budget."""


class OracleCapError(PanelFuseError):
    """Instance exceeds the exhaustive oracle's size cap."""


class InfeasibleFusionError(PanelFuseError):
    """No feasible assignment exists for the requested cost mode.

    ``category_blocks`` lists (profile, left_units, right_units) triples for
    the categorical profiles whose unit totals cannot be aligned.
    """

    def __init__(self, message: str, category_blocks=None):
        self.category_blocks = list(category_blocks or [])
        super().__init__(message)


class AssignmentIntegrityError(PanelFuseError):
    """An assignment set contradicts the panels it claims to match."""
