"""Frequency-estimation precision of quadratic-encoding Ramsey protocols under collective dephasing.

Modules
-------
noise
    Spectra, decay coefficient ``kappa(t)`` and noise trajectories.
dicke
    Exact symmetric-subspace engine: states, noisy encoding, QFI.
closed_form
    Analytic moments and uncertainties for coherent spin and Phi states.
gaussian
    Phase-space (large-J Gaussian) description of one-axis twisted states.
estimation
    Shot sampling, method-of-moments and ratio estimators.
optimizer
    Protocol optimization, scaling fits and the reference scaling table.
cli
    JSON-configured command-line front end.
"""

__version__ = "0.1.0"

from . import closed_form, dicke, errors, estimation, gaussian, noise, optimizer  # noqa: E402,F401
from .errors import DephasimeterError  # noqa: E402,F401
