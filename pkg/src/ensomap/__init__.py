"""Ensemble analysis over a steerable SOM node space.

The engine abstracts each member of a spatiotemporal ensemble into a 2D
point distribution: every time step is mapped to its best-matching SOM
node, and nodes are laid out by an anchored minimum-distortion embedding.
Distributions can be explored (KDE fingerprints), compared (bootstrap
optimal-transport vector fields), and clustered (EMD / vector-field
cosine similarity).
"""

__version__ = "0.1.0"
