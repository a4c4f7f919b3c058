"""Exception types shared across the package.

The CLI maps these onto process exit codes: 0 success, 2 structure
validation failure, 3 data error, 4 numeric failure.
"""


class SpsnError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(SpsnError):
    exit_code = 3


class MalformedJson(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class ConflictingTypes(DataError):
    def __init__(self, path, detail=""):
        self.path = tuple(path)
        msg = "conflicting types at path %r" % ("/".join(map(str, path)) or "<root>",)
        if detail:
            msg += ": " + detail
        super().__init__(msg)


class SchemaViolation(DataError):
    def __init__(self, path, expected, found):
        self.path = tuple(path)
        self.expected = expected
        self.found = found
        super().__init__(
            "schema violation at %r: expected %s, found %s"
            % ("/".join(map(str, path)) or "<root>", expected, found)
        )


class MissingInDensityMode(DataError):
    """A full-evidence query was asked on a tree containing missing values."""

    def __init__(self, path):
        self.path = tuple(path)
        super().__init__(
            "missing value at %r; use a marginal query instead"
            % ("/".join(map(str, path)) or "<root>",)
        )


class ValidationFailure(SpsnError):
    exit_code = 2


class NumericError(SpsnError):
    exit_code = 4


class NonFiniteGradient(NumericError):
    def __init__(self, detail=""):
        super().__init__("non-finite gradient%s" % ((": " + detail) if detail else ""))


class TooLarge(SpsnError):
    """Brute-force enumeration would exceed the configured term budget."""

    exit_code = 3
