"""Shared helpers for the demo scripts."""
from pathlib import Path

OUT = Path(__file__).resolve().parent / "output"
OUT.mkdir(exist_ok=True)


def panel_by_label():
    from enfloc.synth import default_panel
    return {p.label: p for p in default_panel()}
