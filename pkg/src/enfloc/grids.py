"""Identities of the twelve reference grids and their nominal frequencies."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GridLabel:
    label: str
    location: str
    nominal_hz: int


REFERENCE_GRIDS = (
    GridLabel("A", "Texas", 60),
    GridLabel("B", "Lebanon", 50),
    GridLabel("C", "Eastern U.S.", 60),
    GridLabel("D", "Turkey", 50),
    GridLabel("E", "Ireland", 50),
    GridLabel("F", "France", 50),
    GridLabel("G", "Tenerife", 50),
    GridLabel("H", "India (Agra)", 50),
    GridLabel("I", "Western U.S.", 60),
    GridLabel("J", "Brazil", 60),
    GridLabel("K", "Norway", 50),
    GridLabel("L", "Australia", 50),
)
BY_LABEL = {g.label: g for g in REFERENCE_GRIDS}
# grids without audio training data
POWER_ONLY = ("J", "K", "L")


def describe(label: str, nominal_hz: int | None = None) -> GridLabel:
    """Metadata for ``label``; synthetic ``S-X`` labels borrow grid X's nominal."""
    if label in BY_LABEL:
        return BY_LABEL[label]
    base = label[2:] if label.startswith("S-") else None
    if base in BY_LABEL:
        g = BY_LABEL[base]
        return GridLabel(label, f"synthetic (cf. {g.location})", nominal_hz or g.nominal_hz)
    return GridLabel(label, "unknown", int(nominal_hz or 0))
