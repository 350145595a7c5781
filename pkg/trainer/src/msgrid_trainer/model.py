"""Torch U-Net matching the solver's forward-pass conventions.

Per encoder level two 3x3 same-size convolutions, each followed by
ReLU, then 2x2 max pooling; a two-convolution bottleneck; per decoder
level a stride-2 transposed 3x3 convolution (padding 1, output padding
1, no activation), concatenation as [decoder output, encoder skip], and
two more rectified convolutions; a 1x1 classifier head with no
activation.  Channels start at base_channels and double per level.
"""

import torch
from torch import nn


def channel_schedule(levels, base_channels):
    return [base_channels << i for i in range(levels)]


class UNet(nn.Module):
    def __init__(self, levels=4, base_channels=16, in_channels=1, out_channels=4):
        super().__init__()
        if levels not in (2, 3, 4):
            raise ValueError(f"levels must be 2, 3 or 4, got {levels}")
        self.levels = levels
        self.base_channels = base_channels
        self.in_channels = in_channels
        self.out_channels = out_channels

        chans = channel_schedule(levels, base_channels)
        self.enc = nn.ModuleList()
        prev = in_channels
        for ch in chans:
            self.enc.append(
                nn.ModuleDict(
                    {
                        "conv1": nn.Conv2d(prev, ch, 3, padding=1),
                        "conv2": nn.Conv2d(ch, ch, 3, padding=1),
                    }
                )
            )
            prev = ch
        bott = base_channels << levels
        self.bottleneck = nn.ModuleDict(
            {
                "conv1": nn.Conv2d(prev, bott, 3, padding=1),
                "conv2": nn.Conv2d(bott, bott, 3, padding=1),
            }
        )
        self.dec = nn.ModuleList()
        for ch in reversed(chans):
            self.dec.append(
                nn.ModuleDict(
                    {
                        "up": nn.ConvTranspose2d(
                            2 * ch, ch, 3, stride=2, padding=1, output_padding=1
                        ),
                        "conv1": nn.Conv2d(2 * ch, ch, 3, padding=1),
                        "conv2": nn.Conv2d(ch, ch, 3, padding=1),
                    }
                )
            )
        self.classifier = nn.Conv2d(base_channels, out_channels, 1)
        self.pool = nn.MaxPool2d(2, 2)
        self.act = nn.ReLU()

    def forward(self, x):
        skips = []
        h = x
        for level in self.enc:
            h = self.act(level["conv1"](h))
            h = self.act(level["conv2"](h))
            skips.append(h)
            h = self.pool(h)
        h = self.act(self.bottleneck["conv1"](h))
        h = self.act(self.bottleneck["conv2"](h))
        for level, skip in zip(self.dec, reversed(skips)):
            h = level["up"](h)
            h = torch.cat([h, skip], dim=1)
            h = self.act(level["conv1"](h))
            h = self.act(level["conv2"](h))
        return self.classifier(h)


def parameter_count(model):
    return sum(p.numel() for p in model.parameters())
