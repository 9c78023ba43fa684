"""toonflow: a desk-scale sketch-steered cartoon video generator.

Pipeline: a miniature image-to-video diffusion transformer trained with a
rectified-flow objective on procedural animation data, controlled by sparse
keyframe sketches injected as extra tokens, and adapted to the cartoon domain
with per-frame spatial low-rank adapters over a frozen base.
"""

__version__ = "0.1.0"
