"""Shared error base for user-facing failures.

Every module defines its own exception types; they all derive from
GreenFLError so the CLI and service can map them to "user error" exits
(exit code 2 / HTTP 400) without enumerating every subclass.
"""


class GreenFLError(Exception):
    """Base class for errors caused by invalid inputs or configuration."""
