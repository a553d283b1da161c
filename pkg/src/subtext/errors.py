class SubtextError(Exception):
    """Base for fatal, run-aborting errors."""


class FileUnreadable(SubtextError):
    pass


class HeaderMissing(SubtextError):
    pass


class PathUnwritable(SubtextError):
    pass


class ConfigError(SubtextError):
    pass
