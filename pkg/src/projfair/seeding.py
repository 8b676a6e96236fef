"""Named sub-seeds, so each stage draws from its own stream."""

import hashlib


def subseed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
