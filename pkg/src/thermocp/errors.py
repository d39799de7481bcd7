"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so that the CLI can
map failures onto exit statuses and users can match on them.
"""


class ThermoCPError(Exception):
    code = "error"


class DomainError(ThermoCPError, ValueError):
    code = "domain"


class StaticDivergenceError(DomainError):
    """Drude/plasma permittivity requested at exactly zero frequency."""

    code = "static-divergence"


class OnResonanceError(DomainError):
    code = "on-resonance"


class CavityResonanceError(ThermoCPError, ArithmeticError):
    code = "cavity-resonance-singular"


class QuadratureError(ThermoCPError, ArithmeticError):
    code = "quadrature-failure"

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class MatsubaraTruncationError(ThermoCPError, ArithmeticError):
    code = "matsubara-truncation"


class NoWellFoundError(ThermoCPError):
    code = "no-well-found"


class ConfigError(ThermoCPError):
    code = "config"
