"""Serializable verification reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["VerificationReport", "to_jsonable"]


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


@dataclass
class VerificationReport:
    """Outcome of one executable inequality.

    ``worst_violation`` is the largest amount by which the checked inequality
    fails (``<= 0`` when it holds with room to spare); the verdict is PASS iff
    it does not exceed ``tolerance``.
    """

    check: str
    preset: str
    lhs: float
    rhs: float
    worst_violation: float
    tolerance: float
    witness: dict | None = None
    measured: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def passed(self):
        return bool(self.worst_violation <= self.tolerance)

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"

    def to_json(self):
        return to_jsonable(
            {
                "check": self.check,
                "preset": self.preset,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "worst_violation": self.worst_violation,
                "tolerance": self.tolerance,
                "verdict": self.verdict,
                "witness": self.witness if not self.passed else None,
                "measured": self.measured,
                "notes": self.notes,
            }
        )

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps() + "\n")

    @classmethod
    def from_flag(cls, check, preset, ok, measured=None, witness=None, notes=""):
        """Report for a boolean criterion: violation 1 when it fails, 0 otherwise."""
        return cls(check, preset, float(not ok), 0.0, float(not ok), 0.0, witness, measured or {}, notes)
