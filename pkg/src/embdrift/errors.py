"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front-end can map
domain failures to distinct process statuses.
"""


class EmbDriftError(Exception):
    exit_code = 10


class InvalidInput(EmbDriftError, ValueError):
    exit_code = 11


class InsufficientSamples(EmbDriftError, ValueError):
    exit_code = 12


class DimensionError(EmbDriftError, ValueError):
    exit_code = 13


class RankError(EmbDriftError, ValueError):
    """Not enough linearly independent rows for the requested dimensionality.

    ``scope`` is ``"batch"`` or the offending label id.
    """

    exit_code = 14

    def __init__(self, scope, count=None, required=None, message=None):
        self.scope = scope
        self.count = count
        self.required = required
        if message is None:
            message = f"rank shortfall for {scope!r}: {count} rows, need {required}"
        super().__init__(message)


class NotPSD(EmbDriftError, ValueError):
    exit_code = 15


class SingularCovariance(EmbDriftError, ValueError):
    exit_code = 16


class EmptyLabel(EmbDriftError, ValueError):
    exit_code = 17


class InsufficientData(EmbDriftError, ValueError):
    exit_code = 18


class NothingToRender(EmbDriftError, ValueError):
    exit_code = 19


class DegenerateData(EmbDriftError, ValueError):
    exit_code = 20


class InvalidK(EmbDriftError, ValueError):
    exit_code = 21


class InvalidSchedule(EmbDriftError, ValueError):
    exit_code = 22


class UndefinedCorrelation(EmbDriftError, ValueError):
    exit_code = 23


class FormatError(EmbDriftError, ValueError):
    exit_code = 24


class CorruptFile(EmbDriftError, ValueError):
    exit_code = 25


class VersionError(EmbDriftError, ValueError):
    exit_code = 26


class IntegrityWarning(UserWarning):
    """Stored config hash does not match the stored config."""
