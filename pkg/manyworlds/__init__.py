"""
Many-Worlds - Differentiable Inverse Renderer

Reconstructs 3D shapes from images by blending a detached mean surface with
sampled hypothetical surfaces, and propagating image-loss derivatives into an
occupancy field without silhouette sampling or transmittance.
"""

__version__ = "1.0.0"
