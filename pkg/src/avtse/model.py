"""End-to-end extractor: encoders, cue learner, cue fusion, mask estimator,
decoder. Masked-feature degradation hooks in between `encode_visual` and
`extract`; pixel degradations act on frames before `encode_visual`."""

from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .backend import MaskEstimator
from .config import RunConfig
from .frontends import (SpeechEncoder, SpeechDecoder, VisualEncoder, chunk,
                        dechunk, apply_mask)
from .fusion import CueFusion
from .learner import CueLearner


class ModelOutput(NamedTuple):
    estimate: torch.Tensor                 # (B, L)
    mask: torch.Tensor                     # (B, N, K, T_v)
    fusion_weights: Optional[torch.Tensor]  # (B, 3, H, T_v); None in concat mode
    speaker_logits: torch.Tensor
    acoustic_logits: torch.Tensor
    semantic_logits: torch.Tensor
    reliabilities: torch.Tensor            # (B, 3, H, T_v)
    cues: dict


def _squeeze_output(out: ModelOutput) -> ModelOutput:
    def sq(v):
        if torch.is_tensor(v):
            return v.squeeze(0)
        if isinstance(v, dict):
            return {k: sq(t) for k, t in v.items()}
        return v
    return ModelOutput(*(sq(v) for v in out))


class SpeakerExtractor(nn.Module):
    def __init__(self, enc_dim=256, hidden=128, chunk_len=64, enc_kernel=40,
                 enc_stride=20, num_blocks=5, num_speakers=8,
                 acoustic_classes=512, semantic_classes=48,
                 cues=("speaker", "acoustic", "semantic"),
                 fusion_mode="interaction", sample_rate=16000, fps=25,
                 visual_channels=(16, 32, 64)):
        super().__init__()
        self.encoder = SpeechEncoder(enc_dim, enc_kernel, enc_stride,
                                     chunk_len, sample_rate, fps)
        self.decoder = SpeechDecoder(enc_dim, enc_kernel, enc_stride)
        self.visual = VisualEncoder(enc_dim, channels=visual_channels)
        self.learner = CueLearner(enc_dim, hidden, num_speakers,
                                  acoustic_classes, semantic_classes)
        self.fusion = CueFusion(enc_dim, hidden, enabled=cues,
                                mode=fusion_mode)
        self.separator = MaskEstimator(enc_dim, hidden, num_blocks)
        self.chunk_len = chunk_len
        self.enabled_cues = tuple(cues)

    @classmethod
    def from_config(cls, cfg: RunConfig):
        return cls(enc_dim=cfg.enc_dim, hidden=cfg.hidden_dim,
                   chunk_len=cfg.chunk_len, enc_kernel=cfg.enc_kernel,
                   enc_stride=cfg.enc_stride, num_blocks=cfg.num_blocks,
                   num_speakers=cfg.num_speakers,
                   acoustic_classes=cfg.acoustic_clusters,
                   semantic_classes=cfg.semantic_clusters, cues=cfg.cues,
                   fusion_mode=cfg.fusion, sample_rate=cfg.sample_rate,
                   fps=cfg.fps, visual_channels=cfg.visual_channels)

    def encode_visual(self, frames):
        """(B, T_v, 88, 88) -> per-frame features (B, N, T_v)."""
        return self.visual(frames)

    def extract(self, mixture, visual_feat) -> ModelOutput:
        """Separate the target given an already-encoded visual feature."""
        squeeze = mixture.dim() == 1
        if squeeze:
            mixture = mixture.unsqueeze(0)
            visual_feat = visual_feat.unsqueeze(0)
        length = mixture.shape[-1]
        mix_feat = chunk(self.encoder(mixture), self.chunk_len)
        learned = self.learner(mix_feat, visual_feat)
        cues = {"speaker": learned.speaker, "acoustic": learned.acoustic,
                "semantic": learned.semantic}
        fused, weights, rels, _ = self.fusion(mix_feat, learned.audio_out,
                                              cues)
        mask = self.separator(fused)
        masked = apply_mask(mix_feat, mask)
        estimate = self.decoder(dechunk(masked), length)
        out = ModelOutput(estimate, mask, weights, learned.speaker_logits,
                          learned.acoustic_logits, learned.semantic_logits,
                          rels, cues)
        return _squeeze_output(out) if squeeze else out

    def forward(self, mixture, frames) -> ModelOutput:
        squeeze = mixture.dim() == 1
        if squeeze:
            mixture = mixture.unsqueeze(0)
            frames = frames.unsqueeze(0)
        out = self.extract(mixture, self.encode_visual(frames))
        return _squeeze_output(out) if squeeze else out
