"""Gray-mapped square QAM, channel draws, noise scaling, and the
hard-decision demapping chain used by the Monte Carlo runs.

A constellation's integer label doubles as its bit pattern: the index is
(gray_x << bits_per_axis) | gray_y, with per-axis Gray coding, so that
nearest-neighbor lattice moves flip exactly one bit and bit errors between
label arrays are popcounts of XORs.
"""

from dataclasses import dataclass

import numpy as np

MODULATIONS = {"qpsk": 4, "qam16": 16}


def gray_pam(bits_per_axis):
    """PAM levels ordered by Gray label: level[gray(i)] = 2i - (n-1)."""
    n = 1 << bits_per_axis
    idx = np.arange(n)
    levels = np.empty(n)
    levels[idx ^ (idx >> 1)] = 2 * idx - (n - 1)
    return levels


@dataclass(frozen=True)
class Constellation:
    order: int
    points: np.ndarray       # unit mean energy, Gray-labeled by index

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.order))

    def map(self, labels):
        return self.points[labels]

    def demap(self, z):
        """Minimum-distance hard decisions; returns integer labels."""
        return np.argmin(np.abs(np.asarray(z)[..., None] - self.points) ** 2, axis=-1)


def make_constellation(order):
    """Square Gray-mapped constellation of the given order (4 or 16)."""
    if order not in (4, 16):
        raise ValueError(f"unsupported constellation order {order}")
    bpa = int(np.log2(order)) // 2
    pam = gray_pam(bpa)
    xi, yi = np.divmod(np.arange(order), 1 << bpa)
    points = pam[xi] + 1j * pam[yi]
    points /= np.sqrt(np.mean(np.abs(points) ** 2))
    return Constellation(order, points)


def constellation_for(modulation):
    try:
        return make_constellation(MODULATIONS[modulation])
    except KeyError:
        raise ValueError(f"unknown modulation {modulation!r}; "
                         f"choose from {sorted(MODULATIONS)}")


def generate_channel(q, k, rng):
    """i.i.d. CN(0,1) channel matrix, q x k."""
    return (rng.standard_normal((q, k)) + 1j * rng.standard_normal((q, k))) / np.sqrt(2.0)


def complex_noise(shape, sigma2, rng):
    return np.sqrt(sigma2 / 2.0) * (rng.standard_normal(shape)
                                    + 1j * rng.standard_normal(shape))


def ebn0_to_noise_variance(ebn0_db, constellation):
    """Per-user noise variance for unit symbol energy at the demapper:
    sigma^2 = 1 / (bits_per_symbol * 10^(ebn0/10))."""
    return 1.0 / (constellation.bits_per_symbol * 10.0 ** (ebn0_db / 10.0))


def link_snr(total_power, k, sigma2):
    """Total transmit power over total noise power, P_S / (K sigma^2)."""
    return total_power / (k * sigma2)


def count_bit_errors(sent_labels, detected_labels):
    return int(np.bitwise_count(sent_labels ^ detected_labels).sum())


def simulate_block(f, beta, sigma2, constellation, n_bits_per_user, rng):
    """Transmit one block through effective channel f (K x K), demap
    beta * y with hard decisions, count bit errors.

    Returns (bit_errors, total_bits).
    """
    f = np.asarray(f)
    k = f.shape[1]
    bps = constellation.bits_per_symbol
    if n_bits_per_user % bps:
        raise ValueError(f"{n_bits_per_user} bits per user does not pack into "
                         f"{bps}-bit symbols")
    s = n_bits_per_user // bps
    labels = rng.integers(0, constellation.order, (s, k))
    y = constellation.map(labels) @ f + complex_noise((s, k), sigma2, rng)
    detected = constellation.demap(beta * y)
    return count_bit_errors(labels, detected), s * k * bps
