"""Contrastive learning for disentangled representations.

Library + CLI: synthetic data from distance-based latent conditionals, four
contrastive losses over a learnable dissimilarity, Adam training, R^2/MCC
identifiability evaluation, and numerical oracles for the closed-form optima.
"""

__version__ = "0.1.0"
