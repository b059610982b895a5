"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError (and
subclasses) -> 2, RemoteServiceError / ProtocolError -> 3.
"""


class ThemescoutError(Exception):
    """Base class for all package errors."""


class UsageError(ThemescoutError):
    """Bad invocation: unknown subcommand, missing flag, unreadable config."""


class DataError(ThemescoutError):
    """Invalid or inconsistent data: duplicate ids, dangling references,
    malformed store files, contract violations on inputs."""


class StoreError(DataError):
    """Corpus store is missing, corrupt, or version-incompatible."""


class RemoteServiceError(ThemescoutError):
    """Remote scorer/generator unreachable or failing after retry."""

    def __init__(self, endpoint: str, detail: str = ""):
        self.endpoint = endpoint
        self.detail = detail
        msg = f"remote service error at {endpoint}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ProtocolError(RemoteServiceError):
    """Remote service answered, but not in the agreed wire format."""

    def __init__(self, endpoint: str, detail: str, payload_excerpt: str = ""):
        self.payload_excerpt = payload_excerpt
        if payload_excerpt:
            detail = f"{detail} (payload: {payload_excerpt!r})"
        super().__init__(endpoint, detail)
