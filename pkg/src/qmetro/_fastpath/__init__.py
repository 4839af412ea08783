"""Backend selector for the sequential chain kernel.

The compiled extension is used when it imported successfully; set
QMETRO_PURE=1 to force the pure-numpy implementation.  `BACKEND` reports
which one is active.
"""

import os

if os.environ.get("QMETRO_PURE") == "1":
    from ._chain_py import BACKEND, chain_apply
else:
    try:
        from ._chain import BACKEND, chain_apply  # type: ignore[attr-defined]
    except ImportError:
        from ._chain_py import BACKEND, chain_apply

__all__ = ["BACKEND", "chain_apply"]
