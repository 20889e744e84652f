"""Pure-Python implementations of the string kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the extension is tested against.
"""

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def levenshtein(a, b):
    """Edit distance with unit-cost insert, delete and substitute."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a, b):
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def similarity_many(query, choices):
    return [similarity(query, c) for c in choices]


def fnv1a_64(data):
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


def trigram_counts(text, dim):
    """Bucket counts of hashed character trigrams.

    Texts shorter than three characters hash as a single gram so that only
    the empty string maps to the zero vector.
    """
    counts = [0] * dim
    if not text:
        return counts
    if len(text) < 3:
        counts[fnv1a_64(text.encode("utf-8")) % dim] += 1
        return counts
    for i in range(len(text) - 2):
        counts[fnv1a_64(text[i:i + 3].encode("utf-8")) % dim] += 1
    return counts
