"""Diagnostic figures. Every image is written next to a numeric-text dump of its data."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .armodel import grid_pole_database  # noqa: E402
from .cascade import PipelineConfig, classify  # noqa: E402
from .enf import dump_enf, extract_enf  # noqa: E402
from .pretyping import type_recording  # noqa: E402
from .signal_io import load_recording  # noqa: E402
from .spectral import stft  # noqa: E402


def _dump_path(out, suffix: str) -> Path:
    out = Path(out)
    return out.with_name(out.stem + suffix)


def plot_spectrogram(path, out, max_hz: float = 250.0, frame_s: float = 2.0) -> list:
    """STFT magnitude (dB) up to ``max_hz``; dump rows are frames, columns bins."""
    rec = load_recording(path)
    times, freqs, mags = stft(rec.samples, rec.sample_rate_hz, frame_s, 0.0, window="hann")
    keep = freqs <= max_hz
    db = 20.0 * np.log10(mags[:, keep] + 1e-12)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.pcolormesh(times, freqs[keep], db.T, shading="auto")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("frequency (Hz)")
    ax.set_title(Path(path).name)
    fig.tight_layout()
    fig.savefig(out, dpi=100)
    plt.close(fig)
    dump = _dump_path(out, "_spectrogram.txt")
    header = "t_s," + ",".join(f"{f:.4f}" for f in freqs[keep])
    np.savetxt(dump, np.column_stack([times, db]), delimiter=",", fmt="%.4f",
               header=header, comments="")
    return [str(out), str(dump)]


def plot_enf(path, out, config: PipelineConfig = PipelineConfig()) -> list:
    rec = load_recording(path)
    typ = type_recording(rec, config.type_threshold, config.sn_half_width_hz)
    enf = extract_enf(rec, typ.nominal_hz, typ.data_type, config.enf)
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(enf.times, enf.values_hz, lw=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("ENF (Hz)")
    ax.set_title(f"{Path(path).name}: {typ.data_type}, {typ.nominal_hz} Hz nominal")
    fig.tight_layout()
    fig.savefig(out, dpi=100)
    plt.close(fig)
    dump = _dump_path(out, "_enf.txt")
    dump_enf(enf, dump)
    return [str(out), str(dump)]


def plot_poles(model, path, out) -> list:
    """Test-recording poles over the training poles of the shortlisted grids."""
    rec = load_recording(path)
    report = classify(model, rec)
    kind = report.data_kind
    sets = grid_pole_database(rec, report.typing.data_type, "test",
                              model.config.ar_order(report.typing.data_type),
                              model.config.pole_block_s)
    db = model.pole_dbs[kind]
    fig, ax = plt.subplots(figsize=(5, 5))
    theta = np.linspace(0, 2 * np.pi, 400)
    ax.plot(np.cos(theta), np.sin(theta), color="0.7", lw=0.6)
    dump = _dump_path(out, "_poles.txt")
    with open(dump, "w", encoding="ascii") as fh:
        fh.write("re,im,grid,segment\n")
        for g in report.shortlist.shortlist:
            p = db.poles[g]
            ax.scatter(p.real, p.imag, s=4, label=f"train {g}")
            for z in p:
                fh.write(f"{z.real:.12g},{z.imag:.12g},{g},-1\n")
        for ps in sets:
            for z in ps.poles:
                fh.write(f"{z.real:.12g},{z.imag:.12g},test,{ps.segment_index}\n")
    test = np.concatenate([s.poles for s in sets]) if sets else np.zeros(0, complex)
    ax.scatter(test.real, test.imag, s=8, marker="x", color="k", label="test")
    ax.set_aspect("equal")
    ax.set_xlabel("real")
    ax.set_ylabel("imaginary")
    ax.set_title(f"{Path(path).name}: decided {report.final_label}")
    ax.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return [str(out), str(dump)]
