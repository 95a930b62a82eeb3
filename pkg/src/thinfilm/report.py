"""Structured check results, verification reports and atomic file output."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

__all__ = ["CheckResult", "VerificationReport", "atomic_write_text"]


@dataclass
class CheckResult:
    """One named pass/fail check with its value, bound and margin.

    ``margin`` is oriented so that nonnegative means pass with room to
    spare; its exact meaning (value - bound or bound - value) follows the
    direction of the inequality being checked.
    """

    name: str
    value: float
    bound: float
    passed: bool
    margin: float
    note: str = ""

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "value": self.value,
            "bound": self.bound,
            "pass": bool(self.passed),
            "margin": self.margin,
        }
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class VerificationReport:
    """Ordered collection of checks plus run metadata."""

    meta: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def add(self, check: CheckResult) -> CheckResult:
        if any(c.name == check.name for c in self.checks):
            raise ValueError(f"duplicate check name {check.name!r}")
        self.checks.append(check)
        return check

    def extend(self, checks) -> None:
        for c in checks:
            self.add(c)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "all_passed": self.all_passed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, path) -> None:
        atomic_write_text(path, self.to_json())

    def summary_lines(self):
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            yield (f"{status} {c.name}: value={c.value:.6g} "
                   f"bound={c.bound:.6g} margin={c.margin:.3g}"
                   + (f" ({c.note})" if c.note else ""))


def atomic_write_text(path, text: str) -> None:
    """Write-then-rename so partially written artifacts never appear."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-",
                               suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
