"""Soft-rank diffusion over permutations.

Permutations are lifted to continuous soft ranks in [0, 1]^N, noised with a
reflected Brownian bridge, and denoised with stagewise Plackett-Luce style
models (PL / GPL / cGPL / pointer-cGPL).
"""

__version__ = "0.1.0"
