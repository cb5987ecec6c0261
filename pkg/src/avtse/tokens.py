"""Discrete token supervision: frame-level features of the clean target
speech, k-means codebooks, and nearest-centroid tokenization.

Features use 64 ms windows at a 40 ms hop so there is exactly one column per
video frame. The acoustic feature is [pitch, 40 log-mel bins]; the semantic
feature is log-mel with +-2 frames of context stacking and can be swapped for
any extractor with the same (waveform) -> (D, T_v) signature.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import SAMPLE_RATE, FPS

WIN_SAMPLES = 1024   # 64 ms
HOP_SAMPLES = 640    # 40 ms
N_MELS = 40
PITCH_FMIN = 60.0
PITCH_FMAX = 400.0
VOICING_THRESHOLD = 0.3
SEMANTIC_CONTEXT = 2


def _frame_signal(wave, num_frames):
    frames = np.zeros((num_frames, WIN_SAMPLES))
    for t in range(num_frames):
        start = t * HOP_SAMPLES
        seg = wave[start:start + WIN_SAMPLES]
        frames[t, :len(seg)] = seg
    return frames


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, n_fft=WIN_SAMPLES, sample_rate=SAMPLE_RATE,
                   fmin=0.0, fmax=None):
    """Triangular mel filters on rfft bins, rows normalized to unit peak."""
    fmax = fmax or sample_rate / 2.0
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    bank = np.zeros((n_mels, len(bin_freqs)))
    for i in range(n_mels):
        left, center, right = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (bin_freqs - left) / max(center - left, 1e-9)
        down = (right - bin_freqs) / max(right - center, 1e-9)
        bank[i] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


_MEL_BANK = None


def _mel_bank():
    global _MEL_BANK
    if _MEL_BANK is None:
        _MEL_BANK = mel_filterbank()
    return _MEL_BANK


def frame_pitch(frame, sample_rate=SAMPLE_RATE, fmin=PITCH_FMIN,
                fmax=PITCH_FMAX, threshold=VOICING_THRESHOLD):
    """Autocorrelation pitch for one frame in Hz; 0 when unvoiced.

    Picks the peak of the normalized autocorrelation in the candidate lag
    range and refines it with parabolic interpolation."""
    x = frame - np.mean(frame)
    energy = np.dot(x, x)
    if energy <= 1e-12:
        return 0.0
    lag_min = int(np.floor(sample_rate / fmax))
    lag_max = int(np.ceil(sample_rate / fmin))
    lag_max = min(lag_max, len(x) - 1)
    corr = np.correlate(x, x, mode="full")[len(x) - 1:]
    norm = corr / corr[0]
    window = norm[lag_min:lag_max + 1]
    best = int(np.argmax(window)) + lag_min
    if norm[best] < threshold:
        return 0.0
    # parabolic refinement around the peak
    lag = float(best)
    if lag_min < best < lag_max:
        y0, y1, y2 = norm[best - 1], norm[best], norm[best + 1]
        denom = y0 - 2.0 * y1 + y2
        if abs(denom) > 1e-12:
            lag += 0.5 * (y0 - y2) / denom
    return sample_rate / lag


def log_mel(frames):
    """(T, win) windows -> (n_mels, T) log mel magnitudes."""
    window = np.hanning(WIN_SAMPLES)
    spec = np.abs(np.fft.rfft(frames * window, axis=-1))
    mel = _mel_bank() @ spec.T
    return np.log(mel + 1e-10)


def semantic_logmel_context(wave):
    """Default semantic extractor: log-mel stacked with +-2 frames of context
    (edges replicated)."""
    num_frames = max(1, int(round(len(wave) / SAMPLE_RATE * FPS)))
    mel = log_mel(_frame_signal(wave, num_frames))
    stacked = []
    for off in range(-SEMANTIC_CONTEXT, SEMANTIC_CONTEXT + 1):
        idx = np.clip(np.arange(num_frames) + off, 0, num_frames - 1)
        stacked.append(mel[:, idx])
    return np.concatenate(stacked, axis=0)


def extract_frame_feats(wave, kind, semantic_extractor=None):
    """Frame-level features of clean target speech: (D, T_v).

    kind='acoustic' -> [pitch; 40 log-mel bins]; kind='semantic' -> the
    pluggable semantic extractor (context-stacked log-mel by default)."""
    if len(wave) < WIN_SAMPLES:
        raise ValueError("clip too short for one analysis window")
    if kind == "semantic":
        extractor = semantic_extractor or semantic_logmel_context
        return extractor(wave)
    if kind != "acoustic":
        raise ValueError(f"unknown feature kind {kind!r}")
    num_frames = max(1, int(round(len(wave) / SAMPLE_RATE * FPS)))
    frames = _frame_signal(wave, num_frames)
    pitch = np.array([frame_pitch(f) for f in frames])
    return np.vstack([pitch[None, :], log_mel(frames)])


@dataclass
class Codebook:
    centroids: np.ndarray  # (clusters, dim)
    seed: int
    inertia_history: list = field(default_factory=list, repr=False)

    @property
    def clusters(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]


def _sq_dists(points, centroids):
    # (n, k) squared Euclidean distances
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)


def _kmeans_pp_init(points, k, rng):
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(len(points))]
    d2 = ((points - centroids[0]) ** 2).sum(-1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(len(points))]
        else:
            centroids[i] = points[rng.choice(len(points), p=d2 / total)]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(-1))
    return centroids


def fit_kmeans(points, clusters, seed=0, max_iter=100, tol=1e-6) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding; stops at `max_iter` or when
    the relative inertia change drops below `tol`. Deterministic given seed
    and input order; the per-iteration inertia trace is kept on the result."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be (n, dim)")
    if len(points) < clusters:
        raise ValueError("fewer points than clusters")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, clusters, rng)
    history = []
    prev = None
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        assign = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(len(points)), assign].sum())
        history.append(inertia)
        for c in range(clusters):
            members = points[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
            else:  # re-seed an empty cluster with the farthest point
                far = int(np.argmax(d2.min(axis=1)))
                centroids[c] = points[far]
        if prev is not None and abs(prev - inertia) <= tol * max(prev, 1e-12):
            break
        prev = inertia
    return Codebook(centroids=centroids, seed=seed, inertia_history=history)


def tokenize(features, codebook: Codebook):
    """Nearest-centroid token per feature column (Euclidean, ties to the
    lowest index). features: (D, T_v) -> (T_v,) int array."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != codebook.dim:
        raise ValueError(
            f"feature dim {features.shape[0]} != codebook dim {codebook.dim}")
    d2 = _sq_dists(features.T, codebook.centroids)
    return np.argmin(d2, axis=1)


def save_codebook(codebook: Codebook, path):
    payload = {"clusters": codebook.clusters, "dim": codebook.dim,
               "seed": codebook.seed,
               "centroids": codebook.centroids.tolist()}
    with open(path, "w") as f:
        json.dump(payload, f)


def load_codebook(path) -> Codebook:
    with open(path) as f:
        payload = json.load(f)
    centroids = np.asarray(payload["centroids"], dtype=np.float64)
    if centroids.shape != (payload["clusters"], payload["dim"]):
        raise ValueError("corrupt codebook file")
    return Codebook(centroids=centroids, seed=payload["seed"])


def build_codebooks(target_waves, acoustic_clusters, semantic_clusters=48,
                    seed=0, semantic_extractor=None):
    """Fit acoustic and semantic codebooks over the pooled frame features of
    the given clean target waveforms."""
    acoustic = np.concatenate(
        [extract_frame_feats(w, "acoustic").T for w in target_waves])
    semantic = np.concatenate(
        [extract_frame_feats(w, "semantic", semantic_extractor).T
         for w in target_waves])
    return {
        "acoustic": fit_kmeans(acoustic, acoustic_clusters, seed=seed),
        "semantic": fit_kmeans(semantic, semantic_clusters, seed=seed + 1),
    }
