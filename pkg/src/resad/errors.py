"""Exception taxonomy shared across the pipeline."""


class ResadError(Exception):
    """Base class for all library errors."""


class InvalidConfig(ResadError):
    """A configuration value is out of its legal range."""


class DecodeError(ResadError):
    """An image or mask file could not be decoded."""


class UnsupportedFormat(DecodeError):
    """The file is not a raster format we can read."""


class LayoutError(ResadError):
    """Dataset root does not match the declared layout convention."""


class EmptySplit(ResadError):
    """A required dataset split contains no images."""


class ShapeError(ResadError):
    """Tensor shapes are inconsistent with the operation's contract."""


class EmptyInput(ResadError):
    """An operation received an empty collection."""


class ModelLoadError(ResadError):
    """The backbone file is missing, unreadable, or not a valid model."""


class OutputMismatch(ModelLoadError):
    """The model does not expose the expected named outputs."""


class ChannelMismatch(ModelLoadError):
    """Declared channel counts differ from the expected backbone."""


class InferenceError(ResadError):
    """The backbone failed at inference time."""


class OverflowGuard(ResadError):
    """Attention logits became non-finite (feature blow-up)."""


class EmptyBank(ResadError):
    """Scoring was attempted against a bank with no rows."""


class DegenerateLabels(ResadError):
    """A metric needs both classes but only one is present."""


class VersionMismatch(ResadError):
    """A persisted file has an unknown version or is corrupt."""


class ConfigFingerprintMismatch(ResadError):
    """A persisted bank was built under a different configuration."""
