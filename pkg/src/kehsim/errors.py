"""Exception types raised by kehsim."""


class KehsimError(Exception):
    """Base class for all kehsim errors."""


class ConfigError(KehsimError, ValueError):
    """Invalid configuration or parameter values supplied by the user."""


class DomainError(KehsimError, ValueError):
    """An operation was called outside the domain where it is defined."""


class DatasetError(KehsimError, ValueError):
    """A feature dataset cannot be used for training or evaluation."""
