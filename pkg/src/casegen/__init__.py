"""Corpus-to-dataset pipeline for program-induction samples.

Stages: mine self-contained functions from source trees, synthesize
candidate inputs per function, execute them in an isolated worker pool,
render (cases -> program) samples, and judge candidate reconstructions
against held-out cases.
"""

__version__ = "0.1.0"
