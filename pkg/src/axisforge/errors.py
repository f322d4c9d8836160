"""Exception types shared across the pipeline."""


class AxisForgeError(Exception):
    """Base class for all pipeline errors."""


# --- camera / projection ---

class NonPositiveDepth(AxisForgeError):
    """Point lies at or behind the camera plane."""


class DegenerateAxis(AxisForgeError):
    """An object axis projects to (almost) a single image point."""

    def __init__(self, axis: int, message: str = ""):
        self.axis = axis
        super().__init__(message or f"axis {axis} is image-degenerate")


# --- extraction ---

class EmptyChannel(AxisForgeError):
    """A tri-axis channel has too few pixels above threshold."""

    def __init__(self, channel: int, message: str = ""):
        self.channel = channel
        super().__init__(message or f"channel {channel} is empty")


class DegenerateChannel(AxisForgeError):
    """Channel moments are isotropic: a blob, not a line."""

    def __init__(self, channel: int, message: str = ""):
        self.channel = channel
        super().__init__(message or f"channel {channel} is not line-like")


class NoIntersection(AxisForgeError):
    """The three axis lines admit no well-posed intersection point."""


class VanishingMass(AxisForgeError):
    """Soft-thresholded channel mass is below the numeric floor."""

    def __init__(self, channel: int, message: str = ""):
        self.channel = channel
        super().__init__(message or f"channel {channel} has vanishing soft mass")


# --- corner solver ---

class NoValidSolution(AxisForgeError):
    """No all-positive real depth-scale solution exists."""


class IllConditioned(AxisForgeError):
    """A denominator in the depth-scale elimination is numerically zero."""


class AllCandidatesRejected(AxisForgeError):
    """Every corner candidate produced a reflected (det <= 0) frame."""


# --- diffusion ---

class InvalidSchedule(AxisForgeError):
    """Variance-schedule parameters violate their preconditions."""


class InvalidSigma(AxisForgeError):
    """Sampler noise level exceeds the admissible bound for the step."""


class DivergedLoss(AxisForgeError):
    """Training loss ran away from its initial value."""


# --- pipeline ---

class DegenerateSamplingExhausted(AxisForgeError):
    """Pose rejection sampling failed too many times in a row."""


class ManifestError(AxisForgeError):
    """Dataset manifest is missing, malformed, or inconsistent."""
