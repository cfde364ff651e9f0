"""Prompt-based track recommendation via generative retrieval.

Builds track identifiers (content, integer-hierarchical, learned semantic
IDs), trains a small encoder-decoder to generate them from natural-language
prompts, decodes with diversified beam search, and evaluates against
popularity/sparse/dense baselines.
"""

__version__ = "0.1.0"
