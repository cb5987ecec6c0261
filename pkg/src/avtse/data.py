"""Synthetic audio-visual corpus: paired voices/lip videos and SNR-controlled mixing.

Waveforms are 1-D float arrays at 16 kHz with |x| <= 1 after synthesis.
Videos are (T_v, 88, 88) float arrays in [0, 1] at 25 fps, temporally
aligned with the target speech.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
FPS = 25
IMG_SIZE = 88

# per-speaker fundamentals on a 90..250 Hz grid
_F0_BASE = 90.0
_F0_STEP = 10.0
_F0_SLOTS = 17


def speaker_f0(speaker_id: int) -> float:
    """Fundamental frequency assigned to a speaker id."""
    return _F0_BASE + _F0_STEP * (speaker_id % _F0_SLOTS)


def _amplitude_envelope(rng, num_samples, duration_s):
    # slow random envelope: nodes every 250 ms, linearly interpolated
    num_nodes = max(2, int(round(duration_s * 4)) + 1)
    nodes = rng.uniform(0.3, 1.0, size=num_nodes)
    node_t = np.linspace(0.0, duration_s, num_nodes)
    t = np.arange(num_samples) / SAMPLE_RATE
    return np.interp(t, node_t, nodes)


def synth_av_pair(seed: int, duration_s: float, speaker_id: int):
    """Generate a deterministic voice waveform and its matching lip video.

    The voice is a 3-harmonic oscillator at the speaker's fundamental under a
    slow random amplitude envelope; the video is a filled ellipse whose
    vertical radius follows that envelope sampled at 25 fps.

    Returns (waveform, frames) with waveform of length round(duration_s * 16000)
    and frames of shape (round(duration_s * 25), 88, 88).
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = np.random.default_rng([int(seed), int(speaker_id)])
    num_samples = int(round(duration_s * SAMPLE_RATE))
    num_frames = int(round(duration_s * FPS))

    f0 = speaker_f0(speaker_id)
    # fixed per-speaker harmonic weights give a crude formant-like spectrum
    harmonics = np.array([
        1.0,
        0.4 + 0.4 * ((speaker_id * 7) % 11) / 10.0,
        0.2 + 0.3 * ((speaker_id * 13) % 11) / 10.0,
    ])
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)

    t = np.arange(num_samples) / SAMPLE_RATE
    voice = np.zeros(num_samples)
    for k in range(3):
        voice += harmonics[k] * np.sin(2.0 * np.pi * (k + 1) * f0 * t + phases[k])
    env = _amplitude_envelope(rng, num_samples, duration_s)
    voice *= env
    voice *= 0.95 / max(np.max(np.abs(voice)), 1e-9)

    frame_env = env[np.minimum(
        (np.arange(num_frames) * SAMPLE_RATE) // FPS, num_samples - 1)]
    frames = render_lip_frames(frame_env)
    return voice, frames


def render_lip_frames(opening: np.ndarray) -> np.ndarray:
    """Draw one filled ellipse per frame; vertical radius tracks `opening` in [0,1]."""
    num_frames = len(opening)
    frames = np.zeros((num_frames, IMG_SIZE, IMG_SIZE), dtype=np.float64)
    yy, xx = np.mgrid[0:IMG_SIZE, 0:IMG_SIZE].astype(np.float64)
    cy = cx = (IMG_SIZE - 1) / 2.0
    rx = 30.0
    for i, o in enumerate(opening):
        ry = 4.0 + 26.0 * float(o)
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        frames[i][inside] = 1.0
    return frames


def mix_at_snr(target: np.ndarray, interferer: np.ndarray, snr_db: float) -> np.ndarray:
    """Return target + g * interferer with g chosen so the target/interferer
    power ratio equals snr_db. The target is left at its reference power."""
    if target.shape != interferer.shape:
        raise ValueError("target and interferer must have equal lengths")
    p_t = float(np.mean(target ** 2))
    p_i = float(np.mean(interferer ** 2))
    if p_i <= 0.0:
        raise ValueError("degenerate interferer")
    gain = np.sqrt(p_t / (p_i * 10.0 ** (snr_db / 10.0)))
    return target + gain * interferer


@dataclass
class SampleSpec:
    """Descriptor from which a mixture is regenerated deterministically."""
    sample_id: int
    seed: int
    speaker_id: int
    interferer_id: int
    snr_db: float
    duration_s: float


@dataclass
class MixtureSample:
    mixture: np.ndarray
    target: np.ndarray
    interferer: np.ndarray  # already scaled: mixture == target + interferer
    video: np.ndarray
    snr_db: float
    speaker_id: int
    sample_id: int = 0


def realize(spec: SampleSpec) -> MixtureSample:
    """Materialize the audio/video arrays described by a SampleSpec."""
    target, video = synth_av_pair(spec.seed, spec.duration_s, spec.speaker_id)
    interferer, _ = synth_av_pair(spec.seed, spec.duration_s, spec.interferer_id)
    mixture = mix_at_snr(target, interferer, spec.snr_db)
    return MixtureSample(
        mixture=mixture,
        target=target,
        interferer=mixture - target,
        video=video,
        snr_db=spec.snr_db,
        speaker_id=spec.speaker_id,
        sample_id=spec.sample_id,
    )


def corpus_specs(num_samples, seed, num_speakers, duration_s=2.0,
                 snr_range=(-5.0, 5.0)):
    """Draw sample descriptors: distinct speaker pairs, SNR uniform in snr_range."""
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(num_samples):
        spk, intf = rng.choice(num_speakers, size=2, replace=False)
        specs.append(SampleSpec(
            sample_id=i,
            seed=int(rng.integers(0, 2 ** 31)),
            speaker_id=int(spk),
            interferer_id=int(intf),
            snr_db=float(rng.uniform(*snr_range)),
            duration_s=float(duration_s),
        ))
    return specs


def write_manifest(specs, path):
    with open(path, "w") as f:
        for s in specs:
            f.write(json.dumps(asdict(s)) + "\n")


def read_manifest(path):
    specs = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                specs.append(SampleSpec(**json.loads(line)))
    return specs


def write_wav(path, waveform):
    """16-bit PCM mono at 16 kHz."""
    pcm = np.clip(waveform, -1.0, 1.0)
    wavfile.write(path, SAMPLE_RATE, (pcm * 32767.0).astype(np.int16))


def read_wav(path):
    rate, pcm = wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz, got {rate}")
    if pcm.ndim != 1:
        raise ValueError("expected mono audio")
    return pcm.astype(np.float64) / 32768.0
