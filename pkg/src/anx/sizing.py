"""Deterministic size accounting for representation comparisons.

``approx_tokens`` is intentionally not a model tokenizer: it is a fixed,
documented rule so reports reproduce bit-exactly anywhere. A token is either
an ASCII-alphanumeric run, or a single other non-whitespace rune together
with the alphanumeric run glued to its right (so ``c_1`` counts ``c`` and
``_1``). Whitespace only separates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

TOKEN_RE = re.compile(r"[A-Za-z0-9]+|[^A-Za-z0-9\s][A-Za-z0-9]*")


@dataclass(frozen=True)
class SizeReport:
    bytes: int
    approx_tokens: int

    def to_dict(self) -> dict[str, int]:
        return {"bytes": self.bytes, "approx_tokens": self.approx_tokens}


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text)


def measure_size(text: str) -> SizeReport:
    return SizeReport(bytes=len(text.encode("utf-8")), approx_tokens=len(tokenize(text)))
