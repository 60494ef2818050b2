"""Formatting normalization shared by response handling and metrics."""

from __future__ import annotations

import re

DEFAULT_STRIP_LABELS = (
    "updated comment:",
    "updated comment is:",
    "new comment:",
    "comment:",
    "answer:",
    "output:",
)

_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_+-]*\s*(.*?)\s*```$", re.DOTALL)
_TICK_RE = re.compile(r"^`([^`]*)`$")


def strip_formatting(text: str, extra_labels: tuple[str, ...] = ()) -> str:
    """Remove markdown fences, language tags, surrounding quotes, leading
    response labels, and collapse whitespace runs to single spaces.

    Idempotent: applying it twice equals applying it once.
    """
    labels = DEFAULT_STRIP_LABELS + tuple(l.lower() for l in extra_labels)
    cur = text
    while True:
        nxt = _strip_once(cur, labels)
        if nxt == cur:
            return cur
        cur = nxt


def _strip_once(text: str, labels) -> str:
    s = text.strip()
    m = _FENCE_RE.match(s)
    if m:
        s = m.group(1).strip()
    m = _TICK_RE.match(s)
    if m:
        s = m.group(1).strip()
    lowered = s.lower()
    for label in labels:
        if lowered.startswith(label):
            s = s[len(label):].strip()
            lowered = s.lower()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1].strip()
    return " ".join(s.split())
