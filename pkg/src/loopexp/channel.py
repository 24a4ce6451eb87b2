"""Binary symmetric channel realizations on graph edges.

Transmission of the all-one codeword through a BSC with flip probability p
puts an independent half log-likelihood field on every edge:
h = +(1/2) ln((1-p)/p) with probability 1-p and the opposite sign with
probability p.  Fields are in nats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .graphs import CheckGraph

__all__ = [
    "ChannelRealization",
    "half_llr_magnitude",
    "sample_bsc",
    "conditional_entropy_per_node",
    "write_channel_csv",
    "read_channel_csv",
    "P_MIN",
]

P_MIN = 1e-6


def half_llr_magnitude(p: float) -> float:
    """|h| = (1/2) ln((1-p)/p); zero at p = 1/2."""
    if not 0 < p <= 0.5:
        raise ValueError(f"flip probability {p} outside (0, 1/2]")
    return 0.5 * math.log((1.0 - p) / p)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-edge fields h together with the flip probability that produced them."""

    p: float
    h: np.ndarray
    signs: np.ndarray  # +1 where the edge bit survived, -1 where it flipped
    seed: object = None

    @property
    def magnitude(self) -> float:
        return half_llr_magnitude(self.p)


def sample_bsc(graph: CheckGraph, p: float, seed,
               p_min: float = P_MIN) -> ChannelRealization:
    """Draw sign flips for every edge of ``graph`` at flip probability p.

    p must lie in [p_min, 1/2]; smaller values make the fields numerically
    degenerate (|h| grows like ln(1/p)) and p > 1/2 has no decoding meaning
    under the all-one convention.
    """
    if not p_min <= p <= 0.5:
        raise ValueError(f"flip probability {p} outside [{p_min}, 0.5]")
    rng = np.random.default_rng(seed)
    flips = rng.random(graph.num_edges) < p
    signs = np.where(flips, -1.0, 1.0)
    h = half_llr_magnitude(p) * signs
    return ChannelRealization(p=p, h=h, signs=signs, seed=seed)


def conditional_entropy_per_node(avg_free_energy: float, p: float) -> float:
    """H(X|Y)/n from the quenched average f = E[ln Z]/n, in nats.

    H/n = f - ((1 - 2p)/2) ln((1-p)/p).
    """
    if not 0 < p <= 0.5:
        raise ValueError(f"flip probability {p} outside (0, 1/2]")
    return avg_free_energy - ((1.0 - 2.0 * p) / 2.0) * math.log((1.0 - p) / p)


def write_channel_csv(real: ChannelRealization, path) -> None:
    """CSV rows: edge index, sign, h value; p kept in a comment header."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# p={real.p!r}\n")
        if isinstance(real.seed, int):
            fh.write(f"# seed={real.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["edge", "sign", "h"])
        for e, (s, h) in enumerate(zip(real.signs, real.h)):
            writer.writerow([e, int(s), repr(float(h))])


def read_channel_csv(path) -> ChannelRealization:
    p = None
    seed = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line.lstrip("# ").partition("=")
                key = key.strip()
                if key == "p":
                    p = float(val)
                elif key == "seed":
                    seed = int(val)
                continue
            rows.append(line)
    if p is None:
        raise ValueError(f"{path}: missing '# p=' header")
    reader = csv.reader(rows)
    header = next(reader)
    if header[:3] != ["edge", "sign", "h"]:
        raise ValueError(f"{path}: unexpected header {header}")
    signs, h = [], []
    for idx, row in enumerate(reader):
        if int(row[0]) != idx:
            raise ValueError(f"{path}: edge indices out of order")
        signs.append(float(row[1]))
        h.append(float(row[2]))
    return ChannelRealization(p=p, h=np.array(h), signs=np.array(signs),
                              seed=seed)
