"""Dueling distributional Q-network with factorized-noise linear layers."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import AgentConfig


class NoisyLinear(nn.Module):
    """Linear layer with factorized Gaussian parameter noise.

    Computed as y = (mu_w + sigma_w * eps_out eps_in^T) x + (mu_b + sigma_b * eps_out)
    without materializing the outer product. `reset_noise` draws fresh noise;
    `zero_noise` pins eps to zero so the layer degenerates to its mean weights
    (the evaluation-mode behaviour).
    """

    def __init__(self, in_features: int, out_features: int, sigma0: float = 0.5):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        bound = 1.0 / math.sqrt(in_features)
        self.weight_mu = nn.Parameter(torch.empty(out_features, in_features))
        self.weight_sigma = nn.Parameter(torch.empty(out_features, in_features))
        self.bias_mu = nn.Parameter(torch.empty(out_features))
        self.bias_sigma = nn.Parameter(torch.empty(out_features))
        self.register_buffer("eps_in", torch.zeros(in_features))
        self.register_buffer("eps_out", torch.zeros(out_features))
        self.sigma0 = sigma0
        self.reset_parameters()

    def reset_parameters(self) -> None:
        bound = 1.0 / math.sqrt(self.in_features)
        self.weight_mu.data.uniform_(-bound, bound)
        self.bias_mu.data.uniform_(-bound, bound)
        self.weight_sigma.data.fill_(self.sigma0 / math.sqrt(self.in_features))
        self.bias_sigma.data.fill_(self.sigma0 / math.sqrt(self.in_features))

    @staticmethod
    def _f(x: torch.Tensor) -> torch.Tensor:
        return x.sign() * x.abs().sqrt()

    def reset_noise(self, generator: torch.Generator | None = None) -> None:
        ein = torch.randn(self.in_features, generator=generator,
                          dtype=self.eps_in.dtype)
        eout = torch.randn(self.out_features, generator=generator,
                           dtype=self.eps_out.dtype)
        self.eps_in.copy_(self._f(ein))
        self.eps_out.copy_(self._f(eout))

    def zero_noise(self) -> None:
        self.eps_in.zero_()
        self.eps_out.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = F.linear(x, self.weight_mu, self.bias_mu)
        noise = F.linear(x * self.eps_in, self.weight_sigma) * self.eps_out \
            + self.bias_sigma * self.eps_out
        return mean + noise


class RainbowQNetwork(nn.Module):
    """Conv torso + dueling noisy heads emitting per-action atom logits.

    The dueling combination uses the mean-advantage baseline; `dist` rows are
    valid probability vectors by construction (softmax over atoms).
    """

    def __init__(self, cfg: AgentConfig):
        super().__init__()
        self.cfg = cfg
        convs = []
        in_ch = cfg.frame_stack
        for out_ch, k, stride in cfg.conv_spec:
            convs += [nn.Conv2d(in_ch, out_ch, kernel_size=k, stride=stride), nn.ReLU()]
            in_ch = out_ch
        self.conv = nn.Sequential(*convs)
        with torch.no_grad():
            dummy = torch.zeros(1, cfg.frame_stack, cfg.frame_hw, cfg.frame_hw)
            conv_out = int(self.conv(dummy).flatten(1).shape[1])
        self.value = nn.ModuleList([NoisyLinear(conv_out, cfg.hidden, cfg.noisy_sigma),
                                    NoisyLinear(cfg.hidden, cfg.atoms, cfg.noisy_sigma)])
        self.adv = nn.ModuleList([NoisyLinear(conv_out, cfg.hidden, cfg.noisy_sigma),
                                  NoisyLinear(cfg.hidden, cfg.n_actions * cfg.atoms,
                                              cfg.noisy_sigma)])
        self.register_buffer("support",
                             torch.linspace(cfg.v_min, cfg.v_max, cfg.atoms))

    def noisy_layers(self):
        yield from self.value
        yield from self.adv

    def reset_noise(self, generator: torch.Generator | None = None) -> None:
        for layer in self.noisy_layers():
            layer.reset_noise(generator)

    def zero_noise(self) -> None:
        for layer in self.noisy_layers():
            layer.zero_noise()

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        h = self.conv(x).flatten(1)
        v = self.value[1](F.relu(self.value[0](h))).view(-1, 1, cfg.atoms)
        a = self.adv[1](F.relu(self.adv[0](h))).view(-1, cfg.n_actions, cfg.atoms)
        return v + a - a.mean(dim=1, keepdim=True)

    def log_dist(self, x: torch.Tensor) -> torch.Tensor:
        return F.log_softmax(self.logits(x), dim=-1)

    def dist(self, x: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.logits(x), dim=-1)

    def q_values(self, x: torch.Tensor) -> torch.Tensor:
        return (self.dist(x) * self.support).sum(dim=-1)

    # -- transfer support -----------------------------------------------------
    def final_layers(self) -> dict[str, NoisyLinear]:
        """The last linear layer of each dueling head (the re-init target)."""
        return {"value.1": self.value[1], "adv.1": self.adv[1]}

    def reinit_final(self, seed: int) -> None:
        """Re-draw the final dueling layers from the initialization scheme."""
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            for layer in self.final_layers().values():
                layer.reset_parameters()
                layer.zero_noise()
