"""Python access to the propwatch core: hash embeddings, TGEMB1 stores, features and the CLI."""

import os as _os

_here = _os.path.dirname(__file__)
# Wheels ship the word lists next to the package; build-tree imports use the compiled-in path.
if _os.path.isdir(_os.path.join(_here, "data")):
    _os.environ.setdefault("PROPWATCH_DATA_DIR", _os.path.join(_here, "data"))

from ._core import (  # noqa: E402
    HASH_EMBED_DIM,
    PropwatchError,
    __version__,
    feature_names,
    features,
    hash_embed,
    load_store,
    run,
    save_store,
)

__all__ = [
    "HASH_EMBED_DIM",
    "PropwatchError",
    "__version__",
    "feature_names",
    "features",
    "hash_embed",
    "load_store",
    "run",
    "save_store",
]
