"""Mode-aware non-linear Tucker autoencoders for dense high-order tensors.

Submodules: ``tensor`` (unfold/fold, mode products), ``autodiff`` (tape),
``models``, ``tucker`` (HOSVD), ``datagen``, ``training``, ``metrics``,
``fileformat``, ``experiments`` and ``cli``.  Nothing heavy is imported here
so the CLI can pin BLAS threads before numpy loads.
"""

__version__ = "0.1.0"
