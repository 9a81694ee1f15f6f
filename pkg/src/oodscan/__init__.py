"""Scan-level out-of-distribution detection for volumetric segmentation.

The package covers the full desk-scale pipeline: synthetic cohort
generation, a toy hierarchical encoder, tumor-region feature extraction
(deep and radiomics-lite), confidence-score baselines, a from-scratch
balanced random forest with exact tree Shapley attribution, and the
repeated-split AUROC/FPR95 evaluation protocol.
"""

__version__ = "0.1.0"
