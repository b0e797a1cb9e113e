"""Pointwise decoders: stacks of 1x1 Conv1D layers over query features."""

import torch
from torch import nn

from .config import FeatureLengthError


class PointDecoder(nn.Module):
    """Sequential 1x1 Conv1D layers, ReLU between, linear output.

    Acts independently per point: input (B, in_dim, M) -> (B, out_dim, M).
    """

    def __init__(self, in_dim, hidden=(512, 256, 256), out_dim=1):
        super().__init__()
        self.in_dim = int(in_dim)
        dims = [self.in_dim, *hidden, out_dim]
        self.layers = nn.ModuleList(
            nn.Conv1d(dims[i], dims[i + 1], kernel_size=1) for i in range(len(dims) - 1))

    def forward(self, x):
        if x.shape[1] != self.in_dim:
            raise FeatureLengthError(
                f"decoder expects {self.in_dim} input features, got {x.shape[1]}")
        for layer in self.layers[:-1]:
            x = torch.relu(layer(x))
        return self.layers[-1](x)
