"""Per-cue reliability estimation, cue-conditioned enhancement of the speech
context, and reliability-weighted attention fusion.

The speech context R is (B, H, K, T_v): a projection of the encoded mixture
plus a projection of the learner's purified audio stream. Cues arrive as
(B, H, T_v) (the speaker embedding is broadcast over time first). Fusion
weights form a categorical distribution over the three cue branches at every
(feature, frame) position.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .learner import conv_over_time

CUE_ORDER = ("speaker", "acoustic", "semantic")
DISABLED_LOGIT = -1e9


class CueBranch(nn.Module):
    """Reliability and enhancement networks for a single cue."""

    def __init__(self, width, kernel=1):
        super().__init__()
        pad = kernel // 2
        self.rel_feat = nn.Conv1d(width, width, kernel, padding=pad)
        self.rel_gate = nn.Conv1d(width, width, kernel, padding=pad)
        self.enh_out = nn.Conv1d(width, width, kernel, padding=pad)
        self.enh_gate = nn.Conv1d(width, width, kernel, padding=pad)

    def reliability(self, cue, context):
        """rel = feat(cue) * sigmoid(gate(mean over K of context))."""
        gate = torch.sigmoid(self.rel_gate(context.mean(dim=2)))
        return self.rel_feat(cue) * gate

    def enhance(self, cue, context):
        """context + out(cue broadcast over K * sigmoid(gate(context)))."""
        gate = torch.sigmoid(conv_over_time(self.enh_gate, context))
        mixed = cue.unsqueeze(2) * gate
        return context + conv_over_time(self.enh_out, mixed)


class AttentionFusion(nn.Module):
    """Factorized attention over stacked reliabilities: a depthwise conv along
    T_v (shared across branches), then a circular conv along the branch axis,
    then softmax over branches. Both branch-conv parameters start at zero so
    an untrained model weights the cues uniformly."""

    def __init__(self, width, time_kernel=5, branch_kernel=3):
        super().__init__()
        self.time_conv = nn.Conv1d(width, width, time_kernel,
                                   padding=time_kernel // 2, groups=width)
        self.branch_weight = nn.Parameter(torch.zeros(branch_kernel))
        self.branch_bias = nn.Parameter(torch.zeros(1))
        self.branch_kernel = branch_kernel

    def logits(self, rels):
        b, j, h, t = rels.shape
        y = self.time_conv(rels.reshape(b * j, h, t)).reshape(b, j, h, t)
        half = self.branch_kernel // 2
        if half:
            y = torch.cat([y[:, -half:], y, y[:, :half]], dim=1)
        out = self.branch_bias * torch.ones_like(rels)
        for d in range(self.branch_kernel):
            out = out + self.branch_weight[d] * y[:, d:d + j]
        return out

    def forward(self, rels, enhanced, disabled=()):
        """rels (B, J, H, T), enhanced (B, J, H, K, T) -> (fused, weights)."""
        logits = self.logits(rels)
        if disabled:
            mask = torch.zeros(logits.shape[1], dtype=torch.bool,
                               device=logits.device)
            mask[list(disabled)] = True
            logits = logits.masked_fill(mask.view(1, -1, 1, 1), DISABLED_LOGIT)
        weights = torch.softmax(logits, dim=1)
        fused = (weights.unsqueeze(3) * enhanced).sum(dim=1)
        return fused, weights


class CueFusion(nn.Module):
    """Builds the speech context, runs one branch per enabled cue, and fuses
    the enhanced contexts. Disabled cues contribute a zero reliability and an
    identity-enhanced context; their fusion logits are pushed to -inf so the
    softmax renormalizes over the remaining branches (uniform when none are
    enabled). `mode="concat"` replaces attention with channel concatenation
    plus a linear projection."""

    def __init__(self, enc_dim, width, enabled=CUE_ORDER, mode="interaction",
                 branch_conv_kernel=1, time_kernel=5, branch_kernel=3):
        super().__init__()
        unknown = set(enabled) - set(CUE_ORDER)
        if unknown:
            raise ValueError(f"unknown cues: {sorted(unknown)}")
        if mode not in ("interaction", "concat"):
            raise ValueError(f"unknown fusion mode {mode!r}")
        self.mix_proj = nn.Conv1d(enc_dim, width, 1)
        self.learner_proj = nn.Conv1d(enc_dim, width, 1)
        self.branches = nn.ModuleDict(
            {name: CueBranch(width, branch_conv_kernel)
             for name in CUE_ORDER if name in enabled})
        self.mode = mode
        if mode == "interaction":
            self.attention = AttentionFusion(width, time_kernel, branch_kernel)
        else:
            self.concat_proj = nn.Conv1d(len(CUE_ORDER) * width, width, 1)

    def context(self, mix_feat, learner_feat):
        return (conv_over_time(self.mix_proj, mix_feat)
                + conv_over_time(self.learner_proj, learner_feat))

    def forward(self, mix_feat, learner_feat, cues):
        """cues: dict with 'speaker' (B, H), 'acoustic'/'semantic' (B, H, T).

        Returns (fused (B, H, K, T), weights (B, 3, H, T) or None,
        rels (B, 3, H, T), enhanced (B, 3, H, K, T))."""
        ctx = self.context(mix_feat, learner_feat)
        t_v = ctx.shape[-1]
        rels, enhanced, disabled = [], [], []
        for j, name in enumerate(CUE_ORDER):
            if name in self.branches:
                cue = cues[name]
                if cue.dim() == 2:  # speaker embedding: broadcast over time
                    cue = cue.unsqueeze(-1).expand(-1, -1, t_v)
                branch = self.branches[name]
                rels.append(branch.reliability(cue, ctx))
                enhanced.append(branch.enhance(cue, ctx))
            else:
                rels.append(torch.zeros_like(ctx[:, :, 0]))
                enhanced.append(ctx)
                disabled.append(j)
        rels = torch.stack(rels, dim=1)
        enhanced = torch.stack(enhanced, dim=1)
        if self.mode == "concat":
            b, j, h, k, t = enhanced.shape
            fused = conv_over_time(self.concat_proj,
                                   enhanced.reshape(b, j * h, k, t))
            return fused, None, rels, enhanced
        fused, weights = self.attention(rels, enhanced, disabled)
        return fused, weights, rels, enhanced


def weights_to_csv_rows(weights, feature_indices):
    """Flatten fusion weights (3, H, T) into per-frame CSV rows for the
    selected feature indices; column order is (branch fastest, then feature)."""
    j, h, t = weights.shape
    header = ["t"]
    for idx in feature_indices:
        if not 0 <= idx < h:
            raise ValueError(f"feature index {idx} out of range [0, {h})")
        for name in CUE_ORDER:
            header.append(f"{name}_h{idx}")
    rows = [header]
    for step in range(t):
        row = [str(step)]
        for idx in feature_indices:
            for jj in range(j):
                row.append(f"{weights[jj, idx, step]:.6f}")
        rows.append(row)
    return rows
