class SBSError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SBSError, ValueError):
    exit_code = 2

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class InputFileError(SBSError, ValueError):
    exit_code = 3


class SynthesisError(SBSError, ValueError):
    exit_code = 4


class ValidationError(SBSError):
    exit_code = 4


class IntegrationError(SBSError, RuntimeError):
    exit_code = 4
