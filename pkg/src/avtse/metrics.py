"""Evaluation metrics (SI-SNRi, SDR) and the degradation-sweep runner.

The runner drives any model exposing `encode_visual(frames) -> feat` and
`extract(mixture, feat) -> output-with-.estimate`. Pixel corruptions are
applied to frames before encoding; masked-feature corruption is applied to
the encoded feature.
"""

import csv
from dataclasses import dataclass

import numpy as np
import torch

from . import degrade as deg
from .losses import si_snr, RATIO_FLOOR, RATIO_CEIL

CLEAN = "clean"


def si_snr_db(est, ref) -> float:
    est = torch.as_tensor(np.asarray(est), dtype=torch.float64)
    ref = torch.as_tensor(np.asarray(ref), dtype=torch.float64)
    return float(si_snr(est, ref))


def si_snri(est, mix, ref) -> float:
    """Improvement of the estimate over the unprocessed mixture, in dB."""
    return si_snr_db(est, ref) - si_snr_db(mix, ref)


def sdr(est, ref) -> float:
    """Plain signal-to-distortion ratio 10 log10(||ref||^2 / ||est - ref||^2),
    clamped like si_snr. Not the BSS-Eval projected variant."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError("est/ref shape mismatch")
    ref_power = float(np.sum(ref ** 2))
    if ref_power <= 0.0:
        raise ValueError("degenerate reference")
    err_power = float(np.sum((est - ref) ** 2))
    ratio = ref_power / err_power if err_power > 0 else np.inf
    return 10.0 * np.log10(np.clip(ratio, RATIO_FLOOR, RATIO_CEIL))


@dataclass
class EvalRow:
    sample_id: int
    degradation: str
    proportion: float
    sisnri_db: float
    sdr_db: float


@dataclass
class EvalReport:
    rows: list

    def mean(self, field="sisnri_db"):
        return float(np.mean([getattr(r, field) for r in self.rows]))


def _run_sample(model, sample, kind, proportion, seed):
    frames = sample.video
    t_v = frames.shape[0]
    if kind != CLEAN and proportion > 0:
        spec = deg.make_spec(kind, t_v, proportion, seed)
    else:
        spec = None
    with torch.no_grad():
        if spec is not None and spec.kind in deg.PIXEL_KINDS:
            frames = deg.degrade(frames, spec, seed)
        feat = model.encode_visual(
            torch.as_tensor(frames, dtype=torch.float32))
        if spec is not None and spec.kind in deg.FEATURE_KINDS:
            feat = torch.as_tensor(
                deg.degrade(feat.numpy().astype(np.float64), spec, seed),
                dtype=torch.float32)
        mix = torch.as_tensor(sample.mixture, dtype=torch.float32)
        est = model.extract(mix, feat).estimate.numpy().astype(np.float64)
    return est


def run_eval(model, samples, sweep, seed=0) -> EvalReport:
    """Score each sample under each sweep entry.

    sweep: iterable of (kind, proportion) with kind in {'clean', 'gb', 'cc',
    'mf', 'fm'}. The degradation mask seed is derived from (seed, sample_id,
    entry index) so reports are deterministic. Rows are sorted by sample id
    within each entry."""
    rows = []
    for entry_idx, (kind, proportion) in enumerate(sweep):
        for sample in sorted(samples, key=lambda s: s.sample_id):
            mask_seed = int(
                np.random.default_rng(
                    [seed, entry_idx, sample.sample_id]).integers(2 ** 31))
            est = _run_sample(model, sample, kind, proportion, mask_seed)
            rows.append(EvalRow(
                sample_id=sample.sample_id,
                degradation=kind,
                proportion=float(proportion if kind != CLEAN else 0.0),
                sisnri_db=si_snri(est, sample.mixture, sample.target),
                sdr_db=sdr(est, sample.target),
            ))
    return EvalReport(rows=rows)


def write_report_csv(report: EvalReport, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "degradation", "proportion",
                         "sisnri_db", "sdr_db"])
        for r in report.rows:
            writer.writerow([r.sample_id, r.degradation,
                             f"{r.proportion:.2f}", f"{r.sisnri_db:.6f}",
                             f"{r.sdr_db:.6f}"])
