"""Graph-convolution actor and critic networks.

One symmetric-normalized graph convolution (self-loops included) produces node
embeddings; the actor maps each embedding through two fully connected layers
to strictly positive distribution parameters (softplus + floor), and the
critic sums embeddings over nodes before its own two fully connected layers.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

PARAM_FLOOR = 1e-3
SCALAR_EPS = 1e-4   # sampled price scalars are clamped into (SCALAR_EPS, 1]


def normalized_adjacency(adjacency: np.ndarray) -> torch.Tensor:
    """D^{-1/2} (A + I) D^{-1/2} as a dense double tensor."""
    a = np.asarray(adjacency, dtype=np.float64) + np.eye(adjacency.shape[0])
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return torch.from_numpy(inv_sqrt[:, None] * a * inv_sqrt[None, :])


def head_size(mode_name: str) -> int:
    return {"reb": 1, "price": 2, "joint": 3}[mode_name]


class GraphEncoder(nn.Module):
    def __init__(self, in_features: int, hidden: int):
        super().__init__()
        self.lin = nn.Linear(in_features, hidden)

    def forward(self, x: torch.Tensor, a_hat: torch.Tensor) -> torch.Tensor:
        # x: (..., N, F); aggregation over neighbors then a shared linear map.
        return torch.relu(self.lin(a_hat @ x))


class ActorNet(nn.Module):
    """Per-region positive parameters: (alpha, beta) for the price Beta head
    and/or the Dirichlet concentration, depending on the control mode.

    The output bias starts at softplus^-1(2) so fresh policies explore with
    moderately concentrated distributions (Beta(2,2) around 0.5, Dirichlet
    away from the simplex corners) instead of bimodal extremes."""

    def __init__(self, in_features: int, hidden: int, out_per_region: int):
        super().__init__()
        self.encoder = GraphEncoder(in_features, hidden)
        self.fc1 = nn.Linear(hidden, hidden)
        self.fc2 = nn.Linear(hidden, out_per_region)
        with torch.no_grad():
            self.fc2.bias.fill_(math.log(math.expm1(2.0)))

    def forward(self, x: torch.Tensor, a_hat: torch.Tensor) -> torch.Tensor:
        h = self.encoder(x, a_hat)
        h = torch.relu(self.fc1(h))
        return nn.functional.softplus(self.fc2(h)) + PARAM_FLOOR


class CriticNet(nn.Module):
    """Scalar state value from globally summed node embeddings."""

    def __init__(self, in_features: int, hidden: int):
        super().__init__()
        self.encoder = GraphEncoder(in_features, hidden)
        self.fc1 = nn.Linear(hidden, hidden)
        self.fc2 = nn.Linear(hidden, 1)

    def forward(self, x: torch.Tensor, a_hat: torch.Tensor) -> torch.Tensor:
        h = self.encoder(x, a_hat).sum(dim=-2)
        h = torch.relu(self.fc1(h))
        return self.fc2(h).squeeze(-1)


def beta_log_prob(alpha: torch.Tensor, beta: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    x = x.clamp(min=SCALAR_EPS, max=1.0 - 1e-12)
    return ((alpha - 1) * torch.log(x) + (beta - 1) * torch.log1p(-x)
            - torch.lgamma(alpha) - torch.lgamma(beta) + torch.lgamma(alpha + beta))


def dirichlet_log_prob(conc: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Log density summed over the simplex dimension (last axis)."""
    w = w.clamp(min=1e-12)
    return (((conc - 1) * torch.log(w)).sum(dim=-1)
            - torch.lgamma(conc).sum(dim=-1) + torch.lgamma(conc.sum(dim=-1)))
