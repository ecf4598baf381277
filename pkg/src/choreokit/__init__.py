"""Music-driven dance synthesis engine.

Three-level pipeline: beat-aligned pose sequences (pose level), clustered
motion words with style variation (motif level), and signature-guided motif
selection (choreography level), plus ingestion, evaluation, a CLI, and an
HTTP API for the authoring UI.
"""

__version__ = "0.1.0"
