"""Desk-scale humanoid vision-language-action toolkit.

Body-part motion quantization, template-driven motion/language dataset
synthesis, a tiny autoregressive transformer over a unified vocabulary,
cross-attention vision adapters, kinematic retargeting and motion metrics.
"""

__version__ = "0.1.0"
