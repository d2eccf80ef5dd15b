"""forewarn: desk-scale early-warning forecast stack.

Submodules are imported explicitly (``from forewarn import store``) rather
than re-exported here, keeping worker process startup light.
"""

__version__ = "0.1.0"
