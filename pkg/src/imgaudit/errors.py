"""Exception types shared across the package."""


class ImgAuditError(Exception):
    """Base class for all imgaudit errors."""


class DecodeError(ImgAuditError):
    """An image file could not be decoded."""

    def __init__(self, image_id, reason):
        self.image_id = image_id
        self.reason = reason
        super().__init__(f"{image_id}: {reason}")


class EmptyPlane(ImgAuditError):
    """A luma plane with zero pixels was passed where data is required."""


class TooSmall(ImgAuditError):
    """Image is below the minimum size for the requested operation."""


class KernelTooLarge(ImgAuditError):
    """Blur kernel exceeds the image extent."""


class EmptyDataset(ImgAuditError):
    """A dataset-wide statistic was requested on an empty dataset."""


class EmptyScores(ImgAuditError):
    """A histogram was requested over an empty score list."""


class MissingPercentile(ImgAuditError):
    """A score needs a percentile rank that was not computed."""

    def __init__(self, rank):
        self.rank = rank
        super().__init__(f"percentile rank {rank} not present in stats")


class ZeroVarianceClass(ImgAuditError):
    """Minimum-error thresholding has no split where both classes have
    nonzero variance."""


class ProportionOverflow(ImgAuditError):
    """Perturbation specs request more images than the dataset holds."""


class ProviderFailure(ImgAuditError):
    """An embedding provider failed on one image."""

    def __init__(self, image_id, reason=""):
        self.image_id = image_id
        self.reason = reason
        super().__init__(f"{image_id}: {reason}" if reason else str(image_id))


class IdMismatch(ImgAuditError):
    """Report and label files do not cover the same image ids."""

    def __init__(self, only_in_report, only_in_labels):
        self.only_in_report = sorted(only_in_report)
        self.only_in_labels = sorted(only_in_labels)
        super().__init__(
            f"id mismatch: {len(self.only_in_report)} only in report, "
            f"{len(self.only_in_labels)} only in labels"
        )


class ConfigError(ImgAuditError):
    """Invalid configuration value or spec file."""
