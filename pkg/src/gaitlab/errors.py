"""Exception types shared across the package."""


class GaitLabError(Exception):
    """Base class for all domain errors raised by gaitlab."""


class EmptySilhouette(GaitLabError):
    """A mask contains no foreground pixel."""


class DegenerateBody(GaitLabError):
    """Foreground too small to normalize (height < 2 px)."""


class ShapeMismatch(GaitLabError):
    """An array does not have the shape an operation requires."""


class IndivisibleHeight(GaitLabError):
    """Feature-map height is not divisible by the part count."""


class CorruptFrame(GaitLabError):
    """A stored frame image could not be read."""


class DuplicateSequence(GaitLabError):
    """Two sequences claim the same sequence id."""


class EmptyManifest(GaitLabError):
    """A manifest holds no usable sequences."""


class MissingClass(GaitLabError):
    """A labelled training set does not cover every class."""


class UnknownViewAngle(GaitLabError):
    """An angle has no merged view class."""


class ZeroNormVector(GaitLabError):
    """Cosine similarity is undefined for a zero-norm vector."""


class ConfigConflict(GaitLabError):
    """Two configuration choices cannot hold at the same time."""


class ConfigError(GaitLabError):
    """A configuration file or override could not be parsed."""


class UnknownKey(ConfigError):
    """A configuration key is not in the schema."""


class DegenerateBatch(GaitLabError):
    """A batch admits no valid triplet."""


class MissingLabels(GaitLabError):
    """Supervised training needs subject labels that are absent."""


class MissingMetadata(GaitLabError):
    """An evaluation protocol needs metadata that is absent."""


class EmptyGalleryForProbe(GaitLabError):
    """A probe has no gallery candidates under the protocol rules."""


class CheckpointVersionMismatch(GaitLabError):
    """A checkpoint was written with an unsupported format version."""


class CheckpointFormatError(GaitLabError):
    """A checkpoint file is malformed."""


class EmptySet(GaitLabError):
    """A distance computation received an empty point set."""


class SubsetViolation(GaitLabError):
    """The small augmentation set is not contained in the large one."""


class EmptyAugSet(GaitLabError):
    """An augmentation neighborhood is empty."""


class ParamOutOfRange(GaitLabError):
    """A generator parameter lies outside its documented range."""
