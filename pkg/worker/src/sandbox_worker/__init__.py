"""Constrained execution worker speaking line-delimited JSON over stdio.

One request per line: {"id", "source", "fn_name", "bindings_surface",
"limits"}. One response per line: {"id", "status", "output", "exception",
"duration_ms"}. The worker is single-threaded and keeps no state between
requests beyond interpreter warm-up.
"""

__version__ = "0.1.0"
