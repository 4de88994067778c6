# dpmn/priors/label.py
'''Text labels over the uppercase + digit alphabet'''

import string
from dataclasses import dataclass

from dpmn.errors import DPMNError

LABEL_CHARSET = string.ascii_uppercase + string.digits
MAX_LABEL_LENGTH = 8


@dataclass(frozen=True)
class TextLabel:
    """Recognizer output or synthetic ground truth; empty only when nothing was read."""
    text: str

    def __post_init__(self):
        if len(self.text) > MAX_LABEL_LENGTH:
            raise LabelError(f"label {self.text!r} longer than {MAX_LABEL_LENGTH}")
        bad = sorted(set(self.text) - set(LABEL_CHARSET))
        if bad:
            raise LabelError(f"label {self.text!r} has characters outside the charset: {bad}")

    def __str__(self) -> str:
        return self.text

    def __len__(self) -> int:
        return len(self.text)

    def matches(self, other: "TextLabel | str") -> bool:
        return self.text.upper() == str(other).upper()


def as_label(label: "TextLabel | str") -> TextLabel:
    return label if isinstance(label, TextLabel) else TextLabel(label)


class LabelError(DPMNError, ValueError):
    pass
