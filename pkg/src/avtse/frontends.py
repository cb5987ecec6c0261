"""Speech encoder/decoder with overlapping chunking, and the per-frame visual encoder.

Shape conventions (batch dim optional throughout):
    waveform      (B, L)
    audio feature (B, N, T_f)     encoder output, zero-padded on the right
    chunked       (B, N, K, T_v)  windows of width K at hop K // 2
    visual feature(B, N, T_v)     one column per video frame
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import SAMPLE_RATE, FPS, IMG_SIZE


def num_video_frames(num_samples, sample_rate=SAMPLE_RATE, fps=FPS):
    return max(1, int(round(num_samples / sample_rate * fps)))


def padded_feature_len(num_chunks, chunk_len):
    return chunk_len + (num_chunks - 1) * (chunk_len // 2)


class SpeechEncoder(nn.Module):
    """1-D conv (kernel 40, stride 20 by default) + PReLU, right-padded so the
    number of chunks matches the 25 fps frame count."""

    def __init__(self, enc_dim=256, kernel=40, stride=20, chunk_len=64,
                 sample_rate=SAMPLE_RATE, fps=FPS):
        super().__init__()
        self.conv = nn.Conv1d(1, enc_dim, kernel, stride=stride)
        self.act = nn.PReLU()
        self.enc_dim = enc_dim
        self.kernel = kernel
        self.stride = stride
        self.chunk_len = chunk_len
        self.sample_rate = sample_rate
        self.fps = fps

    def forward(self, wave):
        squeeze = wave.dim() == 1
        if squeeze:
            wave = wave.unsqueeze(0)
        length = wave.shape[-1]
        if length < self.kernel:
            raise ValueError("clip shorter than one encoder kernel")
        feat = self.act(self.conv(wave.unsqueeze(1)))
        num_chunks = num_video_frames(length, self.sample_rate, self.fps)
        target = padded_feature_len(num_chunks, self.chunk_len)
        if feat.shape[-1] > target:
            raise ValueError(
                f"encoder produces {feat.shape[-1]} frames but chunk geometry "
                f"allows only {target}; increase the encoder stride")
        feat = F.pad(feat, (0, target - feat.shape[-1]))
        return feat.squeeze(0) if squeeze else feat


def chunk(feat, chunk_len=64):
    """Segment (…, N, T_f) into (…, N, K, T_v) windows with hop K // 2."""
    hop = chunk_len // 2
    t_f = feat.shape[-1]
    if t_f < chunk_len or (t_f - chunk_len) % hop != 0:
        raise ValueError("unpadded feature")
    windows = feat.unfold(-1, chunk_len, hop)  # (…, N, T_v, K)
    return windows.transpose(-1, -2).contiguous()


def dechunk(chunked):
    """Exact inverse of chunk: overlap-add divided by the per-column overlap
    count (2 in the interior, 1 inside the two boundary half-windows)."""
    squeeze = chunked.dim() == 3
    if squeeze:
        chunked = chunked.unsqueeze(0)
    b, n, k, t_v = chunked.shape
    hop = k // 2
    t_f = padded_feature_len(t_v, k)
    flat = chunked.reshape(b, n * k, t_v)
    summed = F.fold(flat, output_size=(1, t_f), kernel_size=(1, k),
                    stride=(1, hop)).reshape(b, n, t_f)
    ones = torch.ones(1, k, t_v, dtype=chunked.dtype, device=chunked.device)
    divisor = F.fold(ones, output_size=(1, t_f), kernel_size=(1, k),
                     stride=(1, hop)).reshape(1, 1, t_f)
    out = summed / divisor
    return out.squeeze(0) if squeeze else out


class SpeechDecoder(nn.Module):
    """Linear map from each feature vector to a `kernel`-sample frame,
    overlap-added at the encoder stride and truncated to the clip length."""

    def __init__(self, enc_dim=256, kernel=40, stride=20):
        super().__init__()
        self.deconv = nn.ConvTranspose1d(enc_dim, 1, kernel, stride=stride,
                                         bias=False)

    def forward(self, feat, length):
        squeeze = feat.dim() == 2
        if squeeze:
            feat = feat.unsqueeze(0)
        wave = self.deconv(feat).squeeze(1)
        if wave.shape[-1] < length:
            wave = F.pad(wave, (0, length - wave.shape[-1]))
        wave = wave[..., :length]
        return wave.squeeze(0) if squeeze else wave


class VisualEncoder(nn.Module):
    """Per-frame conv stack (4 stride-2 blocks, channels 16-32-64-N by
    default) with global average pooling: frame t maps to feature column t
    only."""

    def __init__(self, enc_dim=256, img_size=IMG_SIZE, channels=(16, 32, 64)):
        super().__init__()
        chans = [1, *channels, enc_dim]
        layers = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            layers += [nn.Conv2d(cin, cout, 3, stride=2, padding=1), nn.PReLU()]
        self.stack = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.img_size = img_size
        self.enc_dim = enc_dim

    def forward(self, frames):
        squeeze = frames.dim() == 3
        if squeeze:
            frames = frames.unsqueeze(0)
        b, t_v, h, w = frames.shape
        if (h, w) != (self.img_size, self.img_size):
            raise ValueError(
                f"expected {self.img_size}x{self.img_size} frames, got {h}x{w}")
        x = frames.reshape(b * t_v, 1, h, w)
        x = self.pool(self.stack(x)).reshape(b, t_v, self.enc_dim)
        x = x.transpose(1, 2)  # (B, N, T_v)
        return x.squeeze(0) if squeeze else x


def apply_mask(features, mask):
    """Element-wise product of the chunked mixture feature and a mask."""
    if features.shape != mask.shape:
        raise ValueError("feature/mask shape mismatch")
    return features * mask
