"""Exception types shared across the package."""


class DataError(Exception):
    """A problem with input data (files, audio content, stored models)."""


class AudioFormatError(DataError):
    """A WAV file is missing, malformed, or in an unsupported format."""


class DictionaryFormatError(DataError):
    """A dictionary file is malformed or inconsistent."""
