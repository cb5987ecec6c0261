"""Hierarchical audio-visual learner: two stacked levels of inner-modality
updates plus gated cross-modal interaction, emitting speaker, acoustic and
semantic cues.

The audio stream is (B, H, K, T_v), the visual stream (B, H, T_v). Both
levels share one architecture; their parameters are disjoint.
"""

from typing import NamedTuple

import torch
import torch.nn as nn


def conv_over_time(conv, x):
    """Apply a Conv1d along the last axis of (B, C, T) or (B, C, K, T)
    (chunks folded into the batch)."""
    if x.dim() == 3:
        return conv(x)
    b, c, k, t = x.shape
    y = conv(x.permute(0, 2, 1, 3).reshape(b * k, c, t))
    return y.reshape(b, k, y.shape[1], t).permute(0, 2, 1, 3)


class GlobalNorm(nn.Module):
    """Normalize over all non-batch dims with channel-wise affine (gLN)."""

    def __init__(self, channels, eps=1e-8):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        dims = tuple(range(1, x.dim()))
        mean = x.mean(dims, keepdim=True)
        var = ((x - mean) ** 2).mean(dims, keepdim=True)
        shape = (1, -1) + (1,) * (x.dim() - 2)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return x * self.weight.view(shape) + self.bias.view(shape)


class ConvGLN(nn.Module):
    """1-D convolution along time followed by global normalization."""

    def __init__(self, width, kernel=1):
        super().__init__()
        self.conv = nn.Conv1d(width, width, kernel, padding=kernel // 2)
        self.norm = GlobalNorm(width)

    def forward(self, x):
        return self.norm(conv_over_time(self.conv, x))

    def zero_(self):
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)


class DualPathBlock(nn.Module):
    """Intra-chunk then inter-chunk BLSTM, each with a linear projection,
    residual add and GroupNorm(1)."""

    def __init__(self, width):
        super().__init__()
        self.intra_rnn = nn.LSTM(width, width, batch_first=True,
                                 bidirectional=True)
        self.intra_proj = nn.Linear(2 * width, width)
        self.intra_norm = nn.GroupNorm(1, width, eps=1e-8)
        self.inter_rnn = nn.LSTM(width, width, batch_first=True,
                                 bidirectional=True)
        self.inter_proj = nn.Linear(2 * width, width)
        self.inter_norm = nn.GroupNorm(1, width, eps=1e-8)

    def forward(self, x):
        b, h, k, t = x.shape
        # intra: sequences over K, one per (sample, chunk index)
        seq = x.permute(0, 3, 2, 1).reshape(b * t, k, h)
        y = self.intra_proj(self.intra_rnn(seq)[0])
        y = y.reshape(b, t, k, h).permute(0, 3, 2, 1)
        x = self.intra_norm(x + y)
        # inter: sequences over T_v
        seq = x.permute(0, 2, 3, 1).reshape(b * k, t, h)
        y = self.inter_proj(self.inter_rnn(seq)[0])
        y = y.reshape(b, k, t, h).permute(0, 3, 1, 2)
        return self.inter_norm(x + y)


class DilatedConvBlock(nn.Module):
    """Residual pair of 1-D convs over T_v with PReLU + LayerNorm between;
    the second conv is dilated by 2."""

    def __init__(self, width, kernel=3):
        super().__init__()
        self.conv1 = nn.Conv1d(width, width, kernel, padding=kernel // 2)
        self.act = nn.PReLU()
        self.norm = nn.LayerNorm(width)
        self.conv2 = nn.Conv1d(width, width, kernel, dilation=2,
                               padding=(kernel // 2) * 2)

    def forward(self, x):
        y = self.act(self.conv1(x))
        y = self.norm(y.transpose(1, 2)).transpose(1, 2)
        return x + self.conv2(y)


class CrossModalGate(nn.Module):
    """Residual gated exchange between the two streams: each stream is updated
    by the other modality scaled by a sigmoid gate computed from itself. The
    visual stream is broadcast over K toward audio; audio is averaged over K
    toward the visual stream."""

    def __init__(self, width, kernel=1):
        super().__init__()
        self.audio_gate = ConvGLN(width, kernel)    # gate from audio
        self.audio_out = ConvGLN(width, kernel)     # update added to audio
        self.visual_gate = ConvGLN(width, kernel)   # gate from visual
        self.visual_out = ConvGLN(width, kernel)    # update added to visual

    def forward(self, audio, visual):
        if audio.shape[-1] != visual.shape[-1]:
            raise ValueError("audio/visual time lengths differ")
        gate_a = torch.sigmoid(self.audio_gate(audio))
        audio_new = audio + self.audio_out(visual.unsqueeze(2) * gate_a)
        gate_v = torch.sigmoid(self.visual_gate(visual))
        visual_new = visual + self.visual_out(audio.mean(dim=2) * gate_v)
        return audio_new, visual_new


class LearnerLevel(nn.Module):
    """One level: entry projections, inner-modality updates, cross-modal gate,
    and a skip of the raw visual input back onto the interacted stream."""

    def __init__(self, audio_in, visual_in, width, gate_kernel=1):
        super().__init__()
        self.audio_proj = nn.Conv1d(audio_in, width, 1)
        self.visual_proj = nn.Conv1d(visual_in, width, 1)
        self.audio_inner = DualPathBlock(width)
        self.visual_inner = DilatedConvBlock(width)
        self.gate = CrossModalGate(width, gate_kernel)
        self.visual_skip = nn.Conv1d(visual_in, width, 1)

    def forward(self, audio_in, visual_in):
        audio = self.audio_inner(conv_over_time(self.audio_proj, audio_in))
        visual = self.visual_inner(self.visual_proj(visual_in))
        audio, visual = self.gate(audio, visual)
        return audio, visual, visual + self.visual_skip(visual_in)


class LearnerOutput(NamedTuple):
    speaker: torch.Tensor          # (B, H)
    acoustic: torch.Tensor         # (B, H, T_v)
    semantic: torch.Tensor         # (B, H, T_v)
    speaker_logits: torch.Tensor   # (B, num_speakers)
    acoustic_logits: torch.Tensor  # (B, acoustic_classes, T_v)
    semantic_logits: torch.Tensor  # (B, semantic_classes, T_v)
    audio_out: torch.Tensor        # (B, N, K, T_v)
    low_audio: torch.Tensor        # (B, H, K, T_v)
    low_visual: torch.Tensor       # (B, H, T_v)


class CueLearner(nn.Module):
    """Low level extracts the speaker embedding and acoustic-synchronisation
    cue; the high level reuses the same architecture and emits the semantic
    cue. The purified audio stream is projected back to the encoder width."""

    def __init__(self, enc_dim=256, hidden=128, num_speakers=8,
                 acoustic_classes=512, semantic_classes=48, gate_kernel=1):
        super().__init__()
        self.low = LearnerLevel(enc_dim, enc_dim, hidden, gate_kernel)
        self.high = LearnerLevel(hidden, hidden, hidden, gate_kernel)
        self.audio_exit = nn.Conv1d(hidden, enc_dim, 1)
        self.speaker_proj = nn.Linear(hidden, hidden)
        self.acoustic_proj = nn.Conv1d(hidden, hidden, 1)
        self.speaker_head = nn.Linear(hidden, num_speakers)
        self.acoustic_head = nn.Conv1d(hidden, acoustic_classes, 1)
        self.semantic_head = nn.Conv1d(hidden, semantic_classes, 1)

    def forward(self, audio_feat, visual_feat) -> LearnerOutput:
        low_audio, low_visual, visual_carry = self.low(audio_feat, visual_feat)
        acoustic = self.acoustic_proj(low_visual)
        speaker = self.speaker_proj(low_visual.mean(dim=-1))
        high_audio, _, semantic = self.high(low_audio, visual_carry)
        return LearnerOutput(
            speaker=speaker,
            acoustic=acoustic,
            semantic=semantic,
            speaker_logits=self.speaker_head(speaker),
            acoustic_logits=self.acoustic_head(acoustic),
            semantic_logits=self.semantic_head(semantic),
            audio_out=conv_over_time(self.audio_exit, high_audio),
            low_audio=low_audio,
            low_visual=low_visual,
        )
