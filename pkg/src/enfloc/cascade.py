"""End-to-end cascade: typing gate, ENF features, per-kind SVM shortlist, pole matching.

Training builds one :class:`~enfloc.svm.MulticlassSvm` and one
:class:`~enfloc.polematch.PoleDatabase` for each data kind
(``50power``, ``60power``, ``50audio``, ``60audio``) present in the corpus.
Both stages are trained on the same recordings.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import time
import zipfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import grids
from .armodel import flatten_poles, grid_pole_database
from .enf import EnfConfig, EnfSignal, extract_enf
from .errors import (
    ConfigError,
    CorruptModel,
    EnflocError,
    KindUnavailable,
    NeedTwoClasses,
    TooShort,
    UnsupportedVersion,
)
from .features import FeatureMask, feature_matrix, mask_for
from .polematch import MatchResult, PoleDatabase, match
from .pretyping import TypingResult, type_recording
from .signal_io import Recording, load_recording
from .svm import BinarySvm, MulticlassSvm, ShortlistDecision, aggregate_and_shortlist, \
    train_multiclass

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
REPORT_SCHEMA = "1.0"
_ZIP_DATE = (2020, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the cascade, flat so it can live in a key-value file."""

    type_threshold: float = 3.0
    sn_half_width_hz: float = 1.5
    audio_frame_s: float = 5.0
    audio_overlap_s: float = 3.0
    bandwidths_hz: tuple = (1.0, 3.0, 8.0)
    n_harmonics: int = 6
    audio_n_fft: int = 0
    power_frame_s: float = 2.0
    power_band_lo_hz: float = 46.0
    power_band_hi_hz: float = 64.0
    power_zero_pad: int = 8
    hampel_window: int = 11
    hampel_sigmas: float = 3.0
    smooth_window: int = 5
    features: str = "table3"
    svm_c_grid: tuple = (0.1, 1.0, 10.0, 100.0)
    svm_gamma_grid: tuple = (0.01, 0.1, 1.0, 10.0)
    cv_folds: int = 5
    svm_tol: float = 1e-3
    ar_order_power: int = 8
    ar_order_audio: int = 12
    pole_block_s: float = 10.0
    match_x: int = 2
    min_enf_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("bandwidths_hz", "svm_c_grid", "svm_gamma_grid"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        checks = [
            (self.type_threshold > 0, "type_threshold must be positive"),
            (self.sn_half_width_hz > 0, "sn_half_width_hz must be positive"),
            (0 <= self.audio_overlap_s < self.audio_frame_s, "audio overlap must be < frame"),
            (self.power_frame_s > 0, "power_frame_s must be positive"),
            (0 < self.power_band_lo_hz < self.power_band_hi_hz, "bad power search band"),
            (len(self.bandwidths_hz) > 0 and min(self.bandwidths_hz) > 0, "bad bandwidths"),
            (self.n_harmonics >= 1, "n_harmonics must be >= 1"),
            (self.hampel_window >= 3 and self.hampel_window % 2 == 1, "hampel_window odd >= 3"),
            (self.smooth_window >= 1 and self.smooth_window % 2 == 1, "smooth_window odd"),
            (self.features in ("table3", "all"), "features must be 'table3' or 'all'"),
            (self.cv_folds >= 2, "cv_folds must be >= 2"),
            (self.ar_order_power >= 1 and self.ar_order_audio >= 1, "AR orders must be >= 1"),
            (self.pole_block_s > 0, "pole_block_s must be positive"),
            (self.match_x >= 1, "match_x must be >= 1"),
            (self.min_enf_samples >= 32, "min_enf_samples must be >= 32"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_mapping(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def replace(self, **kw) -> "PipelineConfig":
        d = self.to_dict()
        d.update(kw)
        return PipelineConfig.from_mapping(d)

    @property
    def enf(self) -> EnfConfig:
        return EnfConfig(
            audio_frame_s=self.audio_frame_s, audio_overlap_s=self.audio_overlap_s,
            bandwidths_hz=self.bandwidths_hz, n_harmonics=self.n_harmonics,
            audio_n_fft=self.audio_n_fft, power_frame_s=self.power_frame_s,
            power_band_hz=(self.power_band_lo_hz, self.power_band_hi_hz),
            power_zero_pad=self.power_zero_pad, hampel_window=self.hampel_window,
            hampel_sigmas=self.hampel_sigmas, smooth_window=self.smooth_window)

    def ar_order(self, data_type: str) -> int:
        return self.ar_order_power if data_type == "power" else self.ar_order_audio


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a flat key-value object")
    return PipelineConfig.from_mapping(data)


@dataclass
class CascadeModel:
    svms: dict
    pole_dbs: dict
    config: PipelineConfig
    grid_table: dict
    format_version: int = FORMAT_VERSION

    @property
    def kinds(self) -> list:
        return sorted(self.svms)

    @property
    def masks(self) -> dict:
        return {k: m.mask for k, m in self.svms.items()}


@dataclass(frozen=True)
class TrainingItem:
    """A labelled training file; ``source`` is a :class:`Recording` or a path loaded lazily."""

    source: object
    grid: str
    data_type: Optional[str] = None
    nominal_hz: Optional[int] = None


@dataclass
class ClassificationReport:
    source: str
    typing: TypingResult
    enf: dict
    shortlist: ShortlistDecision
    pole_match: Optional[MatchResult]
    final_label: str
    baseline_label: str
    notes: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    @property
    def data_kind(self) -> str:
        return self.typing.data_kind

    def to_dict(self, include_timing: bool = False) -> dict:
        t = self.typing
        d = {
            "schema": REPORT_SCHEMA,
            "source": self.source,
            "typing": {
                "nominal_hz": t.nominal_hz, "data_type": t.data_type,
                "detected_type": t.detected_type, "type_overridden": t.type_overridden,
                "fp_hz": t.fp_hz, "d50": t.d50, "d60": t.d60, "ratio_pr_pn": t.ratio_pr_pn,
            },
            "enf": self.enf,
            "svm": {"probabilities": self.shortlist.probabilities,
                    "shortlist": list(self.shortlist.shortlist)},
            "pole_match": None if self.pole_match is None else {
                "distances": self.pole_match.distances, "chosen": self.pole_match.chosen,
                "X": self.pole_match.X, "U": self.pole_match.U},
            "final_label": self.final_label,
            "baseline_label": self.baseline_label,
            "notes": list(self.notes),
        }
        if include_timing:
            d["timing_s"] = self.timing
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True)

    def summary(self) -> str:
        t = self.typing
        lines = [
            f"{self.source or '<memory>'}",
            f"  type      : {t.data_type} (Pr/Pn={t.ratio_pr_pn:.3f}), nominal {t.nominal_hz} Hz "
            f"(D50={t.d50:.3f}, D60={t.d60:.3f})",
            f"  ENF       : {self.enf['n']} samples, mean {self.enf['mean_hz']:.4f} Hz, "
            f"std {self.enf['std_hz']:.4f} Hz",
            "  SVM       : " + ", ".join(
                f"{g}={self.shortlist.probabilities[g]:.3f}" for g in self.shortlist.shortlist),
        ]
        if self.pole_match is not None:
            lines.append("  poles     : " + ", ".join(
                f"{g}={v:.4g}" for g, v in self.pole_match.distances.items()))
        lines.append(f"  decision  : {self.final_label} "
                     f"({grids.describe(self.final_label).location}); "
                     f"ENF-only SVM: {self.baseline_label}")
        lines += [f"  note      : {n}" for n in self.notes]
        return "\n".join(lines)


def _kind(nominal_hz: int, data_type: str) -> str:
    return f"{int(nominal_hz)}{data_type}"


def _training_rows(item: TrainingItem, config: PipelineConfig):
    src = item.source
    rec = src if isinstance(src, Recording) else load_recording(src, item.data_type)
    try:
        data_type = item.data_type
        nominal = item.nominal_hz
        if data_type is None or nominal is None:
            typ = type_recording(rec, config.type_threshold, config.sn_half_width_hz,
                                 declared_type=data_type)
            data_type = data_type or typ.data_type
            nominal = nominal or typ.nominal_hz
        enf = extract_enf(rec, nominal, data_type, config.enf)
        feats = feature_matrix(enf)
        pole_sets = grid_pole_database(rec, data_type, item.grid,
                                       config.ar_order(data_type), config.pole_block_s)
    except EnflocError as exc:
        raise type(exc)(f"training file {rec.source_path or item.grid}: {exc}") from exc
    return _kind(nominal, data_type), item.grid, feats, flatten_poles(pole_sets)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


class _TrainRows:
    def __init__(self, config):
        self.config = config

    def __call__(self, item):
        return _training_rows(item, self.config)


def train(corpus, config: PipelineConfig = PipelineConfig(), jobs: int = 1) -> CascadeModel:
    """Fit every per-kind SVM and pole database found in ``corpus``.

    ``corpus`` is a sequence of :class:`TrainingItem`. A kind with a single
    grid raises :class:`NeedTwoClasses`.
    """
    items = list(corpus)
    if not items:
        raise NeedTwoClasses("empty training corpus")
    rows = _map(_TrainRows(config), items, jobs)
    by_kind: dict = {}
    nominal_of = {}
    for (kind, grid, feats, poles), item in zip(rows, items):
        entry = by_kind.setdefault(kind, {"X": [], "y": [], "poles": {}})
        entry["X"].append(feats)
        entry["y"] += [grid] * feats.shape[0]
        entry["poles"].setdefault(grid, []).append(poles)
        nominal_of[grid] = int(kind[:2])
    svms, dbs = {}, {}
    for kind in sorted(by_kind):
        entry = by_kind[kind]
        n_grids = len(entry["poles"])
        if n_grids < 2:
            raise NeedTwoClasses(f"{kind}: training data covers only {n_grids} grid")
        mask = mask_for(kind, config.features)
        svms[kind] = train_multiclass(
            np.vstack(entry["X"]), entry["y"], kind, mask, config.svm_c_grid,
            config.svm_gamma_grid, config.cv_folds, config.svm_tol, config.seed)
        dbs[kind] = PoleDatabase({g: np.concatenate(p) for g, p in sorted(entry["poles"].items())})
    table = {g: asdict(grids.describe(g, n)) for g, n in sorted(nominal_of.items())}
    return CascadeModel(svms, dbs, config, table)


def classify(model: CascadeModel, rec: Recording, declared_type: Optional[str] = None,
             skip_pole_match: bool = False) -> ClassificationReport:
    """Run the full cascade on one recording."""
    cfg = model.config
    timing = {}
    notes = []
    t0 = time.perf_counter()
    typ = type_recording(rec, cfg.type_threshold, cfg.sn_half_width_hz, declared_type)
    if typ.type_overridden:
        notes.append(f"declared type {typ.data_type} overrides detected {typ.detected_type}")
    timing["typing"] = time.perf_counter() - t0
    kind = typ.data_kind
    if kind not in model.svms:
        raise KindUnavailable(f"model has no {kind} classifier (available: {model.kinds})")
    t0 = time.perf_counter()
    enf: EnfSignal = extract_enf(rec, typ.nominal_hz, typ.data_type, cfg.enf)
    if len(enf) < cfg.min_enf_samples:
        raise TooShort(f"{len(enf)} ENF samples; at least {cfg.min_enf_samples} required")
    timing["enf"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    svm = model.svms[kind]
    P = svm.segment_probabilities(feature_matrix(enf))
    decision = aggregate_and_shortlist(svm, P)
    timing["svm"] = time.perf_counter() - t0
    result = None
    final = decision.best
    if not skip_pole_match:
        t0 = time.perf_counter()
        sets = grid_pole_database(rec, typ.data_type, "", cfg.ar_order(typ.data_type),
                                  cfg.pole_block_s)
        result = match(flatten_poles(sets), model.pole_dbs[kind], decision.shortlist,
                       cfg.match_x)
        final = result.chosen
        timing["pole_match"] = time.perf_counter() - t0
    enf_info = enf.summary()
    enf_info["n_segments"] = int(P.shape[0])
    if enf.chosen_bandwidth_hz is not None:
        enf_info["bandwidth_hz"] = enf.chosen_bandwidth_hz
    return ClassificationReport(rec.source_path, typ, enf_info, decision, result, final,
                                decision.best, notes, timing)


@dataclass
class BatchEntry:
    source: str
    report: Optional[ClassificationReport] = None
    error: Optional[str] = None

    def to_json(self, include_timing: bool = False) -> str:
        if self.report is not None:
            return self.report.to_json(include_timing)
        return json.dumps({"schema": REPORT_SCHEMA, "source": self.source,
                           "error": self.error}, sort_keys=True)


_WORKER_MODEL = None


def _init_worker(model):
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _classify_one(args, model=None) -> BatchEntry:
    src, declared, skip = args
    model = model if model is not None else _WORKER_MODEL
    try:
        rec = src if isinstance(src, Recording) else load_recording(src)
        name = rec.source_path or str(src)
        return BatchEntry(name, classify(model, rec, declared, skip))
    except (EnflocError, OSError, ValueError) as exc:
        name = src.source_path if isinstance(src, Recording) else str(src)
        return BatchEntry(name, error=f"{type(exc).__name__}: {exc}")


def classify_batch(model: CascadeModel, inputs, jobs: int = 1, declared_types=None,
                   skip_pole_match: bool = False) -> list:
    """Classify paths or recordings; output order always matches input order.

    Failures are captured per entry instead of aborting the batch.
    """
    inputs = list(inputs)
    declared = list(declared_types) if declared_types is not None else [None] * len(inputs)
    args = [(s, d, skip_pole_match) for s, d in zip(inputs, declared)]
    if jobs <= 1 or len(args) <= 1:
        return [_classify_one(a, model) for a in args]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(model,)) as ex:
        return list(ex.map(_classify_one, args))


@dataclass
class EvaluationTable:
    """Per-grid correct/total counts for the cascade and the ENF-only SVM."""

    rows: dict
    failures: list

    def _acc(self, which: str, grid=None, data_type=None) -> float:
        correct = total = 0
        for g, r in self.rows.items():
            if grid is not None and g != grid:
                continue
            for dt in ("power", "audio"):
                if data_type is not None and dt != data_type:
                    continue
                correct += r[which][dt][0]
                total += r[which][dt][1]
        return correct / total if total else float("nan")

    def accuracy(self, data_type=None) -> float:
        return self._acc("cascade", data_type=data_type)

    def baseline_accuracy(self, data_type=None) -> float:
        return self._acc("baseline", data_type=data_type)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "failures": self.failures,
                "cascade_accuracy": self.accuracy(),
                "baseline_accuracy": self.baseline_accuracy()}

    def format(self) -> str:
        def cell(c):
            return f"{c[0]}({c[1]})" if c[1] else "-"

        head = (f"{'Grid':<6}| {'ENF-only SVM':^28} | {'Cascade':^28}\n"
                f"{'':<6}| {'Power':>8} {'Audio':>8} {'Acc(%)':>9} "
                f"| {'Power':>8} {'Audio':>8} {'Acc(%)':>9}")
        lines = [head, "-" * len(head.splitlines()[1])]
        tot = {w: {dt: [0, 0] for dt in ("power", "audio")} for w in ("baseline", "cascade")}
        for g, r in self.rows.items():
            parts = []
            for w in ("baseline", "cascade"):
                for dt in ("power", "audio"):
                    tot[w][dt][0] += r[w][dt][0]
                    tot[w][dt][1] += r[w][dt][1]
                acc = 100.0 * self._acc(w, grid=g)
                parts.append(f"{cell(r[w]['power']):>8} {cell(r[w]['audio']):>8} {acc:>9.2f}")
            lines.append(f"{g:<6}| " + " | ".join(parts))
        parts = []
        for w in ("baseline", "cascade"):
            acc = 100.0 * self._acc(w)
            parts.append(f"{cell(tot[w]['power']):>8} {cell(tot[w]['audio']):>8} {acc:>9.2f}")
        lines.append(f"{'All':<6}| " + " | ".join(parts))
        if self.failures:
            lines.append(f"{len(self.failures)} file(s) failed and count as misclassified")
        return "\n".join(lines)


def evaluate(model: CascadeModel, corpus, jobs: int = 1, baseline_only: bool = False):
    """Accuracy of the cascade and the ENF-only SVM on labelled recordings.

    ``corpus`` holds ``(source, grid, data_type)`` triples where ``source`` is
    a path or a :class:`Recording`; ``data_type`` is the ground-truth type used
    for bookkeeping. Returns ``(table, batch_entries)``.
    """
    corpus = list(corpus)
    entries = classify_batch(model, [c[0] for c in corpus], jobs,
                             skip_pole_match=baseline_only)
    rows: dict = {}
    failures = []
    for (src, grid, dt), entry in zip(corpus, entries):
        r = rows.setdefault(grid, {w: {"power": [0, 0], "audio": [0, 0]}
                                   for w in ("baseline", "cascade")})
        for w in ("baseline", "cascade"):
            r[w][dt][1] += 1
        if entry.report is None:
            failures.append({"source": entry.source, "error": entry.error})
            continue
        r["baseline"][dt][0] += int(entry.report.baseline_label == grid)
        r["cascade"][dt][0] += int(entry.report.final_label == grid)
    return EvaluationTable(dict(sorted(rows.items())), failures), entries


# -- persistence -------------------------------------------------------------

def _npy_bytes(a: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(a), allow_pickle=False)
    return buf.getvalue()


def save_model(model: CascadeModel, path) -> None:
    """Write ``model`` as a zip of ``manifest.json`` plus checksummed ``.npy`` arrays."""
    arrays: dict = {}

    def put(name, a):
        arrays[name] = _npy_bytes(np.asarray(a))
        return name

    kinds = {}
    for kind, m in sorted(model.svms.items()):
        machines = []
        for (i, j), b in sorted(m.machines.items()):
            pre = f"{kind}/svm_{i}_{j}"
            machines.append({
                "pair": [i, j], "rho": b.rho, "gamma": b.gamma, "C": b.C,
                "prob_a": b.prob_a, "prob_b": b.prob_b, "converged": b.converged,
                "kkt_gap": b.kkt_gap,
                "support_vectors": put(f"{pre}_sv.npy", b.support_vectors),
                "dual_coef": put(f"{pre}_coef.npy", b.dual_coef),
            })
        db = model.pole_dbs[kind]
        kinds[kind] = {
            "classes": list(m.classes), "mask": list(m.mask.indices), "C": m.C,
            "gamma": m.gamma, "cv_accuracy": m.cv_accuracy,
            "cv_table": [list(r) for r in m.cv_table],
            "mean": put(f"{kind}/mean.npy", m.mean), "std": put(f"{kind}/std.npy", m.std),
            "machines": machines,
            "poles": {g: put(f"{kind}/poles_{g}.npy", p) for g, p in db.poles.items()},
        }
    manifest = {
        "format": "enfloc-cascade",
        "format_version": model.format_version,
        "config": model.config.to_dict(),
        "grid_table": model.grid_table,
        "kinds": kinds,
        "checksums": {n: hashlib.sha256(b).hexdigest() for n, b in sorted(arrays.items())},
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, data in [("manifest.json", json.dumps(manifest, indent=1, sort_keys=True)
                            .encode())] + sorted(arrays.items()):
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, data)


def load_model(path) -> CascadeModel:
    """Read a model archive, verifying its version and every array checksum."""
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read("manifest.json"))
            version = manifest.get("format_version")
            if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
                raise UnsupportedVersion(
                    f"{path}: model format {version!r}; this build reads <= {FORMAT_VERSION}")
            sums = manifest["checksums"]

            def get(name):
                data = zf.read(name)
                if hashlib.sha256(data).hexdigest() != sums.get(name):
                    raise CorruptModel(f"{path}: checksum mismatch for {name}")
                return np.load(io.BytesIO(data), allow_pickle=False)

            config = PipelineConfig.from_mapping(manifest["config"])
            svms, dbs = {}, {}
            for kind, k in manifest["kinds"].items():
                machines = {}
                for e in k["machines"]:
                    machines[tuple(e["pair"])] = BinarySvm(
                        get(e["support_vectors"]), get(e["dual_coef"]), e["rho"], e["gamma"],
                        e["C"], e["prob_a"], e["prob_b"], e["converged"], e["kkt_gap"])
                svms[kind] = MulticlassSvm(
                    kind, list(k["classes"]), machines, FeatureMask(kind, tuple(k["mask"])),
                    get(k["mean"]), get(k["std"]), k["C"], k["gamma"], k["cv_accuracy"],
                    [tuple(r) for r in k["cv_table"]])
                dbs[kind] = PoleDatabase({g: get(n) for g, n in k["poles"].items()})
    except (zipfile.BadZipFile, KeyError, EOFError, ValueError, zlib.error) as exc:
        raise CorruptModel(f"{path}: unreadable model archive ({exc})") from exc
    return CascadeModel(svms, dbs, config, manifest["grid_table"], version)


def training_items_from_manifest(path) -> list:
    """One :class:`TrainingItem` per manifest row; missing files fail up front."""
    from .synth import read_manifest
    items = []
    for row in read_manifest(path):
        if not Path(row["path"]).exists():
            raise FileNotFoundError(f"manifest entry not found: {row['path']}")
        dt = row.get("type") or None
        items.append(TrainingItem(row["path"], row["grid"], dt, row.get("nominal_hz") or None))
    return items
