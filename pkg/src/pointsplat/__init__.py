"""Desk-scale differentiable Gaussian splatting.

The engine reconstructs a small scene from a handful of posed-free views:
per-view focal recovery from dense point maps, global alignment of pairwise
point maps into one world frame, Gaussian cloud initialization, and
depth-regularized optimization of the cloud against the input images.

All heavy math runs in float64. Torch is pinned to a single thread so that
renders, gradients, and training runs are bit-reproducible regardless of the
host's core count.
"""

import torch

torch.set_num_threads(1)

__version__ = "0.1.0"
