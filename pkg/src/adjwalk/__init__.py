"""Event-driven simulator and verification suite for the biased adjacent walk.

Modules:
    distributions  beta laws on intervals, TV distances, tail checks
    process        model parameters, dynamics of X and M, stationary sampler
    coupling       monotone maximal coupling, triple coupling, coalescence
    spectral       exact mean evolution, decay-rate verification
    hydro          transform, Lax solution, discrete schemes, barriers
    mixing         TV bounds, mixing windows, cutoff sweep
    cli            manifests, seeds, and the command-line entry point
"""

from .process import Configuration, ModelParams

__version__ = "0.1.0"

__all__ = ["Configuration", "ModelParams", "__version__"]
