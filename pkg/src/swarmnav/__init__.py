"""Map-free multi-agent LiDAR navigation stack.

Core pieces: a minimal reverse-mode autodiff engine, the recurrent-attention
navigation policy, a perturbed 2D simulator with local replay, reward shaping,
a clipped-surrogate trainer with GAE, and an evaluation harness. A FastAPI
service plus a thin-client CLI wrap the package for long-running runs.
"""

__version__ = "0.1.0"
