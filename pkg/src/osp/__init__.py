"""Open-science data repository engine.

Versioned dataset management, canonical content fingerprints and data
citations, reproducible samples, a six-level privacy scale, view-scoped
access control, a provenance lineage store and in-database analytics,
behind a REST API and a command-line client.
"""

__version__ = "0.1.0"
