"""SqueezeNet-style embedding network."""

import torch
import torch.nn.functional as F
from torch import nn


class Fire(nn.Module):
    def __init__(self, in_channels, squeeze, expand1x1, expand3x3):
        super().__init__()
        self.squeeze = nn.Sequential(nn.Conv2d(in_channels, squeeze, 1, bias=False), nn.BatchNorm2d(squeeze), nn.ReLU(inplace=True))
        self.expand1x1 = nn.Sequential(nn.Conv2d(squeeze, expand1x1, 1, bias=False), nn.BatchNorm2d(expand1x1), nn.ReLU(inplace=True))
        self.expand3x3 = nn.Sequential(nn.Conv2d(squeeze, expand3x3, 3, padding=1, bias=False), nn.BatchNorm2d(expand3x3), nn.ReLU(inplace=True))

    def forward(self, x):
        x = self.squeeze(x)
        return torch.cat([self.expand1x1(x), self.expand3x3(x)], 1)


class SqueezeEmbedder(nn.Module):
    """Fire-module stack whose final 1x1 convolution has ``dim`` filters.

    Global average pooling turns the last feature map into the embedding.
    """

    def __init__(self, dim=256, normalize=True):
        super().__init__()
        self.normalize = normalize
        self.features = nn.Sequential(
            nn.Conv2d(3, 32, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, ceil_mode=True),
            Fire(32, 16, 32, 32),
            Fire(64, 16, 32, 32),
            nn.MaxPool2d(3, stride=2, ceil_mode=True),
            Fire(64, 32, 64, 64),
            Fire(128, 32, 64, 64),
            nn.MaxPool2d(3, stride=2, ceil_mode=True),
            Fire(128, 48, 96, 96),
            Fire(192, 48, 96, 96),
        )
        self.head = nn.Conv2d(192, dim, 1)

    def forward(self, x):
        x = self.head(self.features(x))
        x = F.adaptive_avg_pool2d(x, 1).flatten(1)
        return F.normalize(x, dim=1) if self.normalize else x
