"""Identifiers shared by the generator, the recognizers and the evaluation."""

from typing import NamedTuple

ENDS = ("top", "bottom")


class ClassLabel(NamedTuple):
    """Identity class: one end of one log. The two ends are distinct classes."""

    log_id: str
    end: str


class AcquisitionId(NamedTuple):
    dataset_tag: str
    log_id: str
    end: str
    acq_index: int

    @property
    def label(self):
        return ClassLabel(self.log_id, self.end)

    def __str__(self):
        return f"{self.dataset_tag}/{self.log_id}/{self.end}/{self.acq_index}"

    @classmethod
    def parse(cls, text):
        tag, log_id, end, acq = str(text).split("/")
        return cls(tag, log_id, end, int(acq))
