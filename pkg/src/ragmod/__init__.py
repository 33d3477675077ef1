"""Retrieval-augmented content moderation engine.

Input prompts are embedded, the nearest safe and unsafe reference examples
are retrieved from a curated library, the prompt is enriched with those
references, and a pluggable classifier scores the result. Library snapshots
are immutable and hot-swappable so curation takes effect immediately.
"""

__version__ = "0.1.0"
