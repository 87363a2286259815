"""Exception types shared across the package."""


class TraderCompanyError(Exception):
    """Base class for every error raised by this package."""


class PanelError(TraderCompanyError, ValueError):
    """Malformed price/return panel or CSV input."""


class HistoryError(TraderCompanyError, ValueError):
    """Not enough history to evaluate something at the requested time index."""


class SingularDesignError(TraderCompanyError, ValueError):
    """A least-squares design matrix is singular or rank deficient."""


class MixtureError(TraderCompanyError, ValueError):
    """Gaussian mixture fitting cannot proceed (e.g. fewer samples than components)."""


class ConfigError(TraderCompanyError, ValueError):
    """Invalid configuration or hyper-parameter value."""
