"""Synthetic multi-grid corpora with known ENF trajectories.

Each grid is described by a :class:`GridProfile`. Its ENF follows a
discrete Ornstein-Uhlenbeck process around ``nominal + enf_mean_offset_hz``
and is hard-clipped to ``nominal +/- enf_range_hz``. Recordings are rendered
with a phase-continuous oscillator at the trajectory frequency; power mode
adds a faint white noise floor, audio mode buries the hum under coloured
background noise and band-limited bursts.

Every file's random stream is derived from the master seed and the file's
index in the corpus via :class:`numpy.random.SeedSequence`.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .signal_io import Recording, save_wav

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("file", "grid", "type", "nominal_hz", "seed", "duration_s")
TRAJECTORY_STEP_S = 0.1


@dataclass(frozen=True)
class GridProfile:
    label: str
    nominal_hz: int
    enf_std_hz: float = 0.02
    enf_range_hz: float = 0.2
    drift_timescale_s: float = 60.0
    harmonic_amplitudes: tuple = (1.0, 0.2, 0.1, 0.05, 0.03, 0.02)
    amplitude_flicker_std: float = 0.01
    noise_snr_db: float = 0.0
    enf_mean_offset_hz: float = 0.0
    power_noise_db: float = -45.0
    noise_ar: tuple = ()
    types: tuple = ("power", "audio")

    def __post_init__(self):
        if self.nominal_hz not in (50, 60):
            raise ValueError(f"{self.label}: nominal must be 50 or 60 Hz")
        if self.enf_std_hz < 0 or self.enf_range_hz <= 0 or self.drift_timescale_s <= 0:
            raise ValueError(f"{self.label}: invalid ENF statistics")
        if abs(self.enf_mean_offset_hz) > self.enf_range_hz:
            raise ValueError(f"{self.label}: mean offset outside the clip range")
        if not self.harmonic_amplitudes or min(self.harmonic_amplitudes) < 0:
            raise ValueError(f"{self.label}: need non-negative harmonic amplitudes")
        object.__setattr__(self, "harmonic_amplitudes", tuple(self.harmonic_amplitudes))
        object.__setattr__(self, "noise_ar", tuple(self.noise_ar))
        object.__setattr__(self, "types", tuple(self.types))

    @classmethod
    def from_dict(cls, d: dict) -> "GridProfile":
        return cls(**d)


@dataclass(frozen=True)
class SynthCorpusSpec:
    profiles: tuple
    files_per_grid: int = 2
    duration_s: float = 600.0
    sample_rate_hz: int = 1000
    master_seed: int = 0
    types: tuple = ("power", "audio")
    prefix: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "SynthCorpusSpec":
        d = dict(d)
        profiles = d.pop("profiles", None)
        if profiles is None:
            profiles = default_panel()
        elif isinstance(profiles, str):
            profiles = load_panel(profiles)
        else:
            profiles = [p if isinstance(p, GridProfile) else GridProfile.from_dict(p)
                        for p in profiles]
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown corpus spec keys: {sorted(unknown)}")
        if "types" in d:
            d["types"] = tuple(d["types"])
        return cls(profiles=tuple(profiles), **d)


def load_panel(path) -> list[GridProfile]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [GridProfile.from_dict(p) for p in data["profiles"]]


def default_panel() -> list[GridProfile]:
    """The shipped 12-grid synthetic panel (8 x 50 Hz, 4 x 60 Hz)."""
    text = resources.files("enfloc").joinpath("data/default_panel.json").read_text("utf-8")
    return [GridProfile.from_dict(p) for p in json.loads(text)["profiles"]]


def file_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _ou(n: int, std: float, timescale_steps: float, rng: np.random.Generator) -> np.ndarray:
    if std == 0.0:
        return np.zeros(n)
    phi = np.exp(-1.0 / timescale_steps)
    drive = rng.standard_normal(n) * std * np.sqrt(1.0 - phi * phi)
    drive[0] = rng.standard_normal() * std
    return sps.lfilter([1.0], [1.0, -phi], drive)


def generate_enf_trajectory(profile: GridProfile, duration_s: float,
                            step_s: float = TRAJECTORY_STEP_S, seed=0) -> np.ndarray:
    """ENF samples at ``0, step_s, 2*step_s, ...`` covering ``duration_s``."""
    if step_s <= 0:
        raise ValueError("step must be positive")
    rng = np.random.default_rng(seed)
    n = int(np.floor(duration_s / step_s)) + 2
    x = _ou(n, profile.enf_std_hz, profile.drift_timescale_s / step_s, rng)
    f = profile.nominal_hz + profile.enf_mean_offset_hz + x
    return np.clip(f, profile.nominal_hz - profile.enf_range_hz,
                   profile.nominal_hz + profile.enf_range_hz)


def _colored_noise(n: int, ar: tuple, rng: np.random.Generator) -> np.ndarray:
    e = rng.standard_normal(n)
    if ar:
        e = sps.lfilter([1.0], np.r_[1.0, -np.asarray(ar, dtype=float)], e)
    return e / e.std()


def _bursts(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Band-limited noise switched on for random 0.3-2 s stretches (~30 % duty)."""
    hi = min(450.0, 0.45 * rate)
    sos = sps.butter(4, [min(120.0, 0.5 * hi), hi], btype="bandpass", fs=rate, output="sos")
    carrier = sps.sosfilt(sos, rng.standard_normal(n))
    env = np.zeros(n)
    t = 0
    while t < n:
        gap = int(rng.exponential(2.0) * rate)
        length = int(rng.uniform(0.3, 2.0) * rate)
        start = t + gap
        if start >= n:
            break
        seg = min(length, n - start)
        env[start:start + seg] = np.hanning(seg + 2)[1:-1] * rng.uniform(0.5, 1.5)
        t = start + seg
    out = carrier * env
    sd = out.std()
    return out / sd if sd > 0 else out


def render_recording(profile: GridProfile, trajectory, data_type: str, rate: float,
                     seed=0, step_s: float = TRAJECTORY_STEP_S,
                     duration_s: float | None = None, source_path: str = "") -> Recording:
    """Render ``trajectory`` (Hz at ``step_s`` spacing) as a power or audio recording."""
    harmonics = [a for a in profile.harmonic_amplitudes]
    top = len(harmonics) * float(np.max(trajectory))
    if rate <= 2.0 * top:
        raise ValueError(f"rate {rate} Hz violates Nyquist for harmonic at {top:.1f} Hz")
    if data_type not in ("power", "audio"):
        raise ValueError(f"unknown data type {data_type!r}")
    traj = np.asarray(trajectory, dtype=np.float64)
    if duration_s is None:
        duration_s = (traj.size - 2) * step_s
    n = int(round(duration_s * rate))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    f = np.interp(t, np.arange(traj.size) * step_s, traj)
    phase = 2.0 * np.pi * np.cumsum(f) / rate + rng.uniform(0, 2 * np.pi)
    flicker = 1.0 + _ou(n, profile.amplitude_flicker_std, 5.0 * rate, rng)
    hum = np.zeros(n)
    for k, a in enumerate(harmonics, start=1):
        if a > 0:
            hum += a * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    hum *= flicker
    if data_type == "power":
        noise_sd = np.sqrt(np.mean(hum ** 2)) * 10.0 ** (profile.power_noise_db / 20.0)
        x = hum + noise_sd * rng.standard_normal(n)
    else:
        hum_rms = np.sqrt(np.mean(hum ** 2))
        noise_rms = hum_rms * 10.0 ** (-profile.noise_snr_db / 20.0)
        background = _colored_noise(n, profile.noise_ar, rng)
        bursts = _bursts(n, rate, rng)
        x = hum + noise_rms * (background + bursts) / np.sqrt(2.0)
    x = 0.9 * x / np.max(np.abs(x))
    return Recording(x, rate, source_path, None)


def synth_recording(profile: GridProfile, data_type: str, duration_s: float,
                    rate: float = 1000, seed=0):
    """Convenience: trajectory + rendering from one seed. Returns ``(rec, trajectory)``."""
    ss = np.random.SeedSequence(seed)
    s_traj, s_render = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    traj = generate_enf_trajectory(profile, duration_s, TRAJECTORY_STEP_S, s_traj)
    rec = render_recording(profile, traj, data_type, rate, s_render,
                           duration_s=duration_s)
    return rec, traj


def trajectory_frame_means(trajectory, frame_s: float, hop_s: float, n_frames: int,
                           step_s: float = TRAJECTORY_STEP_S) -> np.ndarray:
    """Mean trajectory frequency over each analysis frame (the extraction oracle)."""
    traj = np.asarray(trajectory, dtype=np.float64)
    fine = 1000
    out = np.empty(n_frames)
    for i in range(n_frames):
        t = i * hop_s + (np.arange(fine) + 0.5) * frame_s / fine
        out[i] = np.interp(t, np.arange(traj.size) * step_s, traj).mean()
    return out


def generate_corpus(spec: SynthCorpusSpec, out_dir) -> list[dict]:
    """Render every (grid, type, file) of ``spec`` into ``out_dir`` as float WAV.

    Writes ``manifest.csv`` next to the recordings and returns its rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    index = 0
    for profile in spec.profiles:
        for data_type in spec.types:
            if data_type not in profile.types:
                continue
            for j in range(spec.files_per_grid):
                seed = file_seed(spec.master_seed, index)
                index += 1
                name = f"{spec.prefix}{profile.label}_{data_type}_{j:02d}.wav"
                rec, _ = synth_recording(profile, data_type, spec.duration_s,
                                         spec.sample_rate_hz, seed)
                save_wav(rec, out / name)
                rows.append({"file": name, "grid": profile.label, "type": data_type,
                             "nominal_hz": profile.nominal_hz, "seed": seed,
                             "duration_s": spec.duration_s})
    write_manifest(rows, out / "manifest.csv")
    log.info("wrote %d recordings to %s", len(rows), out)
    return rows


def write_manifest(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in MANIFEST_FIELDS})


def read_manifest(path) -> list[dict]:
    """Rows of a manifest with ``file`` resolved relative to the manifest's folder."""
    path = Path(path)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        if "file" not in r or "grid" not in r:
            raise ValueError(f"{path}: manifest needs 'file' and 'grid' columns")
        r["path"] = str((path.parent / r["file"]).resolve())
        if r.get("nominal_hz"):
            r["nominal_hz"] = int(float(r["nominal_hz"]))
    return rows


def panel_to_json(profiles) -> str:
    return json.dumps({"profiles": [asdict(p) for p in profiles]}, indent=2)
