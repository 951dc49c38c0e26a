"""Memory-bounded Bayesian-bootstrap posterior summaries."""

from scalebb._scalebb import *  # noqa: F401,F403
from scalebb._scalebb import __version__  # noqa: F401
