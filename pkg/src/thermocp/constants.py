"""Physical constants (CODATA 2018, SI) used throughout the package."""
from scipy import constants as _c

HBAR = _c.hbar
KB = _c.k
C = _c.c
EPS0 = _c.epsilon_0
MU0 = _c.mu_0
PI = _c.pi
