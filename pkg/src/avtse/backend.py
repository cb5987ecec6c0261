"""Audio-only mask estimator: a stack of identical dual-stream blocks.

Each block refines a target stream and an interference stream with their own
intra-/inter-chunk recurrences, then exchanges information through scaled
dot-product cross-attention over T_v (target queries interference). The
attended summary is subtracted from the target and added to the interference
through learned projections; zero-initializing those projections makes the
attention stage an exact identity.
"""

import math

import torch
import torch.nn as nn

from .learner import DualPathBlock, conv_over_time


class CrossStreamAttention(nn.Module):
    def __init__(self, width):
        super().__init__()
        self.query = nn.Conv1d(width, width, 1)
        self.key = nn.Conv1d(width, width, 1)
        self.value = nn.Conv1d(width, width, 1)
        self.target_out = nn.Conv1d(width, width, 1)
        self.interference_out = nn.Conv1d(width, width, 1)
        self.scale = 1.0 / math.sqrt(width)

    def attend(self, target, interference):
        q = conv_over_time(self.query, target)
        k = conv_over_time(self.key, interference)
        v = conv_over_time(self.value, interference)
        scores = torch.einsum("bhkt,bhks->bkts", q, k) * self.scale
        weights = torch.softmax(scores, dim=-1)
        summary = torch.einsum("bkts,bhks->bhkt", weights, v)
        return summary, weights

    def forward(self, target, interference):
        summary, _ = self.attend(target, interference)
        new_target = target - conv_over_time(self.target_out, summary)
        new_interference = interference + conv_over_time(
            self.interference_out, summary)
        return new_target, new_interference


class SeparatorBlock(nn.Module):
    def __init__(self, width):
        super().__init__()
        self.target_inner = DualPathBlock(width)
        self.interference_inner = DualPathBlock(width)
        self.cross = CrossStreamAttention(width)

    def forward(self, target, interference):
        return self.cross(self.target_inner(target),
                          self.interference_inner(interference))


class MaskEstimator(nn.Module):
    """Projects the fused context into two streams, runs `num_blocks`
    separator blocks, and maps the target stream to a nonnegative mask of
    encoder width."""

    def __init__(self, enc_dim=256, width=128, num_blocks=5):
        super().__init__()
        if num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        self.target_in = nn.Conv1d(width, width, 1)
        self.interference_in = nn.Conv1d(width, width, 1)
        self.blocks = nn.ModuleList(SeparatorBlock(width)
                                    for _ in range(num_blocks))
        self.mask_out = nn.Conv1d(width, enc_dim, 1)

    def forward(self, fused):
        target = conv_over_time(self.target_in, fused)
        interference = conv_over_time(self.interference_in, fused)
        for block in self.blocks:
            target, interference = block(target, interference)
        return torch.relu(conv_over_time(self.mask_out, target))
