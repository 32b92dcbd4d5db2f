"""Report containers used by every certificate check.

An item compares a measured value against a bound.  The margin is
bound - value for upper bounds and value - bound for lower bounds, so a
nonnegative margin always means "inequality holds".  An item passes when

    margin >= -1e-9 * max(1, |bound|),

a mixed absolute/relative slack for float roundoff at the boundary.  Items
whose hypothesis is not in force are kept in the report with active=False and
pass vacuously.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PASS_SLACK = 1e-9


@dataclass(frozen=True)
class ReportItem:
    value: float
    bound: float
    margin: float
    passed: bool
    active: bool = True


def _passes(margin: float, bound: float) -> bool:
    return margin >= -PASS_SLACK * max(1.0, abs(bound))


def upper_item(value: float, bound: float, active: bool = True) -> ReportItem:
    """value <= bound."""
    value, bound = float(value), float(bound)
    margin = bound - value
    return ReportItem(value, bound, margin, _passes(margin, bound) if active else True, active)


def lower_item(value: float, bound: float, active: bool = True) -> ReportItem:
    """value >= bound."""
    value, bound = float(value), float(bound)
    margin = value - bound
    return ReportItem(value, bound, margin, _passes(margin, bound) if active else True, active)


@dataclass
class InvariantReport:
    t: float
    items: dict[str, ReportItem] = field(default_factory=dict)
    info: dict[str, float | int | bool | None] = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(item.passed for item in self.items.values())

    @property
    def failures(self) -> list[str]:
        return [name for name, item in self.items.items() if not item.passed]

    def add_upper(self, name: str, value: float, bound: float, active: bool = True) -> ReportItem:
        item = upper_item(value, bound, active)
        self.items[name] = item
        return item

    def add_lower(self, name: str, value: float, bound: float, active: bool = True) -> ReportItem:
        item = lower_item(value, bound, active)
        self.items[name] = item
        return item
