"""Deterministic sub-seed derivation.

Every random draw in the engine traces back to one root seed through
named labels, so any single stage (context sampling, k-means, random
cluster draws, unscored appending) is reproducible in isolation and
independent of iteration order.
"""

import hashlib


def derive_seed(root: int, *labels: str) -> int:
    material = str(int(root)) + "\x1f" + "\x1f".join(labels)
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
