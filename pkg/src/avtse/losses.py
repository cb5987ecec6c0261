"""Training objectives: scale-invariant SNR, multi-resolution STFT magnitude
loss, token/speaker cross-entropies, and their weighted combination."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

# clamp on the power ratio inside the logs keeps values in [-100, 100] dB
RATIO_FLOOR = 1e-10
RATIO_CEIL = 1e10

# (window, hop) in samples at 16 kHz: 60/40 ms, 40/20 ms, 20/10 ms
STFT_CONFIGS = ((960, 640), (640, 320), (320, 160))


def si_snr(est, ref):
    """Scale-invariant SNR in dB over the last axis.

    The reference is rescaled by alpha = <est, ref> / ||ref||^2; the returned
    ratio is clamped to [1e-10, 1e10] before the log."""
    if est.shape != ref.shape:
        raise ValueError("est/ref shape mismatch")
    ref_power = (ref * ref).sum(-1, keepdim=True)
    if not bool((ref_power > 0).all()):
        raise ValueError("degenerate reference")
    alpha = (est * ref).sum(-1, keepdim=True) / ref_power
    scaled = alpha * ref
    err = est - scaled
    ratio = (scaled * scaled).sum(-1) / ((err * err).sum(-1) + 0.0)
    ratio = torch.clamp(ratio, RATIO_FLOOR, RATIO_CEIL)
    return 10.0 * torch.log10(ratio)


def stft_mag_loss(est, ref, configs=STFT_CONFIGS):
    """Sum over resolutions of the mean L1 distance between magnitude
    spectrograms (Hann window, centered frames)."""
    if est.shape != ref.shape:
        raise ValueError("est/ref shape mismatch")
    squeeze = est.dim() == 1
    if squeeze:
        est = est.unsqueeze(0)
        ref = ref.unsqueeze(0)
    total = est.new_zeros(())
    for win, hop in configs:
        window = torch.hann_window(win, dtype=est.dtype, device=est.device)
        mag_e = torch.stft(est, n_fft=win, hop_length=hop, win_length=win,
                           window=window, center=True,
                           return_complex=True).abs()
        mag_r = torch.stft(ref, n_fft=win, hop_length=hop, win_length=win,
                           window=window, center=True,
                           return_complex=True).abs()
        total = total + (mag_e - mag_r).abs().mean()
    return total


def ce_token_loss(logits, tokens):
    """Mean over frames of -log softmax(logits)[token].

    logits: (classes, T) or (B, classes, T); tokens: matching int tensor."""
    if not torch.is_tensor(tokens):
        tokens = torch.as_tensor(tokens)
    tokens = tokens.long()
    num_classes = logits.shape[-2]
    if tokens.numel() and (tokens.min() < 0 or tokens.max() >= num_classes):
        raise ValueError("token out of range")
    if logits.dim() == 2:
        return F.cross_entropy(logits.transpose(0, 1), tokens)
    return F.cross_entropy(logits, tokens)


@dataclass
class LossWeights:
    sisnr: float = 1.0
    stft: float = 0.5
    speaker: float = 0.1
    acoustic: float = 0.1
    semantic: float = 0.1

    def __post_init__(self):
        vals = (self.sisnr, self.stft, self.speaker, self.acoustic,
                self.semantic)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


def total_loss(outputs, targets, weights: LossWeights):
    """Weighted sum of the five objectives. Terms with zero weight are
    skipped entirely (no gradient). Returns (scalar, per-term breakdown).

    outputs: dict with estimate / speaker_logits / acoustic_logits /
    semantic_logits; targets: dict with reference / speaker / acoustic_tokens
    / semantic_tokens."""
    terms = {}
    zero = outputs["estimate"].new_zeros(())

    if weights.sisnr > 0:
        terms["sisnr"] = -si_snr(outputs["estimate"],
                                 targets["reference"]).mean()
    else:
        terms["sisnr"] = zero
    if weights.stft > 0:
        terms["stft"] = stft_mag_loss(outputs["estimate"],
                                      targets["reference"])
    else:
        terms["stft"] = zero
    if weights.speaker > 0:
        spk_logits = outputs["speaker_logits"]
        spk = torch.as_tensor(targets["speaker"]).long()
        if spk_logits.dim() == 1:
            spk_logits = spk_logits.unsqueeze(0)
            spk = spk.reshape(1)
        terms["speaker"] = F.cross_entropy(spk_logits, spk)
    else:
        terms["speaker"] = zero
    if weights.acoustic > 0:
        terms["acoustic"] = ce_token_loss(outputs["acoustic_logits"],
                                          targets["acoustic_tokens"])
    else:
        terms["acoustic"] = zero
    if weights.semantic > 0:
        terms["semantic"] = ce_token_loss(outputs["semantic_logits"],
                                          targets["semantic_tokens"])
    else:
        terms["semantic"] = zero

    scalar = (weights.sisnr * terms["sisnr"] + weights.stft * terms["stft"]
              + weights.speaker * terms["speaker"]
              + weights.acoustic * terms["acoustic"]
              + weights.semantic * terms["semantic"])
    return scalar, {k: float(v) for k, v in terms.items()}
