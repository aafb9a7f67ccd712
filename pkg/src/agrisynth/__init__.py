"""Desk-scale toolkit for building, reviewing, and scoring agricultural
vision-language instruction data.

Subpackages group by pipeline phase: corpus handling, three-stage QA
synthesis, human review, lexical/embedding metrics, judge harness, and
the vision/LoRA arithmetic kernels.
"""

__version__ = "0.1.0"
