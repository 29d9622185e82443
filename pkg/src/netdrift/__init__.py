"""Decentralized dynamic optimization over multi-agent networks.

Simulates first-order decentralized methods (diffusion, gradient tracking,
and two history-corrected baselines) on time-varying strongly convex
objectives,
together with the contraction models and steady-state tracking-error bounds
that predict which method wins on a given network and drift profile.
"""

__version__ = "0.1.0"
