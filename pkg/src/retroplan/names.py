"""Compound-name handling.

Compounds are identified by their display name exactly as written in the
source literature (leading/trailing whitespace stripped).  Two display
names refer to the same compound for comparison purposes when their
*canonical* forms match: whitespace runs collapsed and case folded.
Distinct display names with equal canonical forms are kept as separate
graph nodes until an entity-alignment pass merges them.
"""

from __future__ import annotations

import re

_WS_RUN = re.compile(r"\s+")


def display_name(raw: str) -> str:
    """Normalise a raw name for storage: strip surrounding whitespace only.

    Parameters
    ----------
    raw : str
        Name as it appeared in a document.

    Returns
    -------
    str
        The stored display form.

    Raises
    ------
    ValueError
        If the name is empty after stripping.
    """
    name = raw.strip()
    if not name:
        raise ValueError("compound name is empty")
    return name


def canonical_name(raw: str) -> str:
    """Canonical comparison form: strip, collapse whitespace runs, casefold.

    >>> canonical_name("  Pyromellitic  Dianhydride ")
    'pyromellitic dianhydride'
    """
    return _WS_RUN.sub(" ", raw.strip()).casefold()


def same_compound(a: str, b: str) -> bool:
    """True when two names canonicalise to the same form."""
    return canonical_name(a) == canonical_name(b)
