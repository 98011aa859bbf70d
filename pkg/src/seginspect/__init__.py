"""seginspect: saliency explanation, scoring, and annotation refinement
for semantic-segmentation models."""

__version__ = "0.1.0"
