"""Class labels shared by every module."""
from __future__ import annotations

import enum


class Label(enum.Enum):
    FRAUD = "fraud"
    NORMAL = "normal"

    @classmethod
    def parse(cls, raw: str) -> "Label":
        """Parse a label case-insensitively, ignoring surrounding whitespace."""
        try:
            return cls(raw.strip().lower())
        except (ValueError, AttributeError):
            raise ValueError(f"not a label: {raw!r}") from None

    @property
    def is_fraud(self) -> bool:
        return self is Label.FRAUD


# fraud is the positive class (1) everywhere
def to_binary(labels) -> "list[int]":
    return [1 if lab is Label.FRAUD else 0 for lab in labels]


def from_binary(values) -> "list[Label]":
    return [Label.FRAUD if v else Label.NORMAL for v in values]
