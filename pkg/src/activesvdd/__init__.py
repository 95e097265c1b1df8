"""Active anomaly detection with deep one-class models.

The package trains a bias-free dense encoder so that normal samples map
close to a fixed center in feature space, scores each sample by its squared
distance to that center, and then spends a small labeling budget per stage
on the samples an adaptive boundary considers most ambiguous. Labeled
feedback enters training through contrastive or distance-based
semi-supervised objectives. A batch runner replays stages against ground
truth; an HTTP service runs the same loop against a human labeler.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
