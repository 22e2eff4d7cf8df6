"""Text normalization shared by deduplication, the page index, and scoring.

One routine on purpose: block dedup, post-annotation lookup and answer
matching must agree on what "the same text" means.
"""

from __future__ import annotations

import re
import unicodedata

NORMALIZATION_VERSION = "v1"

_WS = re.compile(r"\s+")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_text(text: str) -> str:
    """Casefold, collapse whitespace, strip leading/trailing punctuation.

    >>> normalize_text("  Total:\\n 42. ")
    'total: 42'
    >>> normalize_text("(Paris)")
    'paris'
    """
    s = _WS.sub(" ", text.casefold()).strip()
    start, end = 0, len(s)
    while start < end and (_is_punct(s[start]) or s[start].isspace()):
        start += 1
    while end > start and (_is_punct(s[end - 1]) or s[end - 1].isspace()):
        end -= 1
    return s[start:end]


def lcs_length(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, 1):
            if ca == cb:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def text_similarity(a: str, b: str) -> float:
    """Longest-common-subsequence ratio ``2*lcs / (len(a) + len(b))`` on normalized text."""
    na, nb = normalize_text(a), normalize_text(b)
    if not na and not nb:
        return 1.0
    return 2.0 * lcs_length(na, nb) / (len(na) + len(nb))
