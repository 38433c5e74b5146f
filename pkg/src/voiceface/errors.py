"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class VoicefaceError(Exception):
    exit_code = 1


class ConfigError(VoicefaceError, ValueError):
    exit_code = 2


class InputFormatError(VoicefaceError, ValueError):
    exit_code = 3


class AudioFormatError(InputFormatError):
    pass


class UnsupportedChannelCount(AudioFormatError):
    pass


class UnsupportedEncoding(AudioFormatError):
    pass


class RecordFormatError(InputFormatError):
    """A line-delimited record file has a bad line.

    ``lineno`` is 1-based.
    """

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class FingerprintMismatch(VoicefaceError, ValueError):
    exit_code = 4


class StageError(VoicefaceError):
    """Wraps a failure inside one pipeline stage."""

    exit_code = 5

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
        if isinstance(cause, VoicefaceError):
            self.exit_code = cause.exit_code
