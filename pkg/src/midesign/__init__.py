"""Optimal experimental design for simulator-defined models.

The package trains a neural critic to maximize a lower bound on the mutual
information between model parameters and data, ascending the bound jointly
in the critic parameters and the experimental design. Models without design
gradients fall back to Gaussian-process Bayesian optimization, and the
trained critic doubles as an amortized posterior estimator.

Submodules (import what you need; nothing heavy loads eagerly):

* ``nn``         feed-forward critic, backprop, Adam, schedules
* ``models``     linear / gaussian-linear / pharmacokinetic / oscillatory simulators
* ``estimator``  MI lower bound, parameter and pathwise design gradients
* ``trainer``    joint ascent loop, validation scoring, grid search
* ``bo``         Matern-5/2 GP surrogate with expected improvement
* ``posterior``  critic-based density and categorical resampling
* ``reference``  nested Monte-Carlo MI and analytic oracles
* ``cli``        config-driven experiment runner
"""

__version__ = "0.1.0"

__all__ = [
    "nn",
    "models",
    "estimator",
    "trainer",
    "bo",
    "posterior",
    "reference",
    "cli",
    "errors",
]
