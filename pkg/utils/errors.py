"""Exception hierarchy shared by services, storage and the command-line surface"""
from utils.constants import EXIT_DATA_ERROR, EXIT_NUMERICAL_FAILURE


class FingerprintError(Exception):
    """Base error; `exit_code` is what the CLI returns when it escapes"""
    exit_code = EXIT_DATA_ERROR


class DataError(FingerprintError):
    exit_code = EXIT_DATA_ERROR


class NumericalError(FingerprintError):
    exit_code = EXIT_NUMERICAL_FAILURE


class GridError(DataError):
    """Invalid grid construction or cell index"""


class GridMismatchError(DataError):
    """Two objects that must share a grid do not"""


class FieldFormatError(DataError):
    """Malformed header or body in a gridded text file"""


class CellCountError(FieldFormatError):
    def __init__(self, expected, found, path=None):
        where = f" in {path}" if path else ""
        super().__init__(f"expected {expected} values{where}, found {found}")
        self.expected = expected
        self.found = found


class NonFiniteValueError(DataError):
    pass


class DegenerateSeriesError(DataError):
    """Time axis cannot support a least-squares trend"""


class InsufficientDataError(DataError):
    """Too few fields, members or time steps for the requested operation"""


class ManifestError(DataError):
    pass


class StaleCacheError(DataError):
    """Basis cache entry does not match its key or content hash"""


class DegenerateSignalError(NumericalError):
    """Forced pattern has no projection on the retained components"""


class ZeroVarianceError(NumericalError):
    """A retained component has non-positive variance"""


class EigensolverError(NumericalError):
    pass


class NonFiniteLogPosteriorError(NumericalError):
    pass


class EmptyKappaSupportError(NumericalError):
    """Every admissible truncation has zero likelihood"""
