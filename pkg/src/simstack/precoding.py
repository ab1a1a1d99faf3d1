"""Linear precoding for the multi-user downlink through the stack.

Model conventions (row-symbol blocks): a block of S symbol vectors is
B (S x K); the received block is Y = B P G H + R with precoder P (K x N),
stack response G (N x Q), user channels H (Q x K), and noise R (S x K).
The effective user-coupling matrix is F = P G H (K x K); receivers apply a
common real scale beta, deciding on beta * y.

SNR is total transmit power over total noise power, snr = P_S / (K sigma^2)
for equal per-user noise variances.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class Precoder:
    """Power-normalized precoding matrix with its receiver scale."""

    matrix: np.ndarray      # K x N
    total_power: float
    beta: float

    def __post_init__(self):
        p2 = np.linalg.norm(self.matrix) ** 2
        if abs(p2 - self.total_power) > 1e-10 * self.total_power:
            raise ValueError(f"||P||_F^2 = {p2} != total power {self.total_power}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def mmse_precoder(g, h, snr, total_power):
    """Sum-MSE-optimal linear precoder under a total power constraint.

    P = (1/beta) * (GH)^H (GH (GH)^H + (1/snr) I_N)^{-1}, with beta chosen
    so that ||P||_F^2 = total_power. The returned beta is also the optimal
    receiver scale for this P (the construction is self-consistent).
    """
    if not np.isfinite(snr) or snr <= 0:
        raise ValueError("snr must be finite and positive")
    m = np.asarray(g) @ np.asarray(h)            # N x K
    n = m.shape[0]
    reg = m @ m.conj().T + (1.0 / snr) * np.eye(n)
    a = scipy.linalg.solve(reg, m, assume_a="pos").conj().T   # K x N
    scale = np.linalg.norm(a)
    beta = scale / np.sqrt(total_power)
    p = a / beta
    # renormalize exactly; solve roundoff can leave ||P||^2 off by ~1 ulp
    p *= np.sqrt(total_power) / np.linalg.norm(p)
    return Precoder(p, float(total_power), float(beta))


def closed_form_mse(g, h, snr):
    """Sum MSE achieved by the MMSE precoder (trace form):
    K - tr[(GH)^H (GH (GH)^H + (1/snr) I_N)^{-1} GH]."""
    m = np.asarray(g) @ np.asarray(h)
    k = m.shape[1]
    reg = m @ m.conj().T + (1.0 / snr) * np.eye(m.shape[0])
    return float(k - np.real(np.trace(m.conj().T @ scipy.linalg.solve(reg, m, assume_a="pos"))))


def spectral_mse(singular_values, snr, k):
    """Same sum MSE from the singular values of GH:
    K - sum_i s_i^2 / (s_i^2 + 1/snr) over the provided values."""
    s = np.asarray(singular_values, dtype=float)
    if np.any(s < 0):
        raise ValueError("singular values must be nonnegative")
    s2 = s ** 2
    return float(k - np.sum(s2 / (s2 + 1.0 / snr)))


def effective_channel(p, g, h):
    return np.asarray(p) @ np.asarray(g) @ np.asarray(h)


def optimal_receiver_scale(f, noise_var):
    """Real scale beta minimizing E||b - beta*y||^2 for y = F b + noise:
    beta* = Re tr F / (||F||_F^2 + K sigma^2)."""
    f = np.asarray(f)
    k = f.shape[0]
    return float(np.real(np.trace(f)) / (np.linalg.norm(f) ** 2 + k * noise_var))


def mse_with_optimal_scale(p, g, h, noise_var):
    """Expected sum MSE of an arbitrary precoder with its optimal receiver
    scale: K - (Re tr F)^2 / (||F||_F^2 + K sigma^2), F = P G H.

    Returns (mse, beta). For the MMSE precoder at snr = P_S/(K sigma^2)
    this reduces to closed_form_mse and the construction beta.
    """
    f = effective_channel(p, g, h)
    k = f.shape[0]
    den = np.linalg.norm(f) ** 2 + k * noise_var
    num = np.real(np.trace(f))
    return float(k - num ** 2 / den), float(num / den)


class TrainablePrecoder:
    """Precoder P = sqrt(P_S) * Ptilde / ||Ptilde||_F with an unconstrained
    complex backing matrix Ptilde; the power constraint holds at every
    optimizer step by construction.

    Exposed to optimizers as a flat real vector [Re(Ptilde); Im(Ptilde)].
    """

    def __init__(self, total_power, init):
        init = np.asarray(init, dtype=complex)
        if np.linalg.norm(init) == 0:
            raise ValueError("initial precoder must be nonzero")
        self.total_power = float(total_power)
        self.backing = init.copy()

    @property
    def shape(self):
        return self.backing.shape

    @property
    def n_params(self):
        return 2 * self.backing.size

    def matrix(self):
        return np.sqrt(self.total_power) * self.backing / np.linalg.norm(self.backing)

    def flat(self):
        return np.concatenate([self.backing.real.ravel(), self.backing.imag.ravel()])

    def set_flat(self, x):
        x = np.asarray(x, dtype=float)
        half = self.backing.size
        self.backing = (x[:half] + 1j * x[half:]).reshape(self.backing.shape)

    def param_grad(self, cograd_p):
        """Real gradient w.r.t. flat() from the cogradient w.r.t. P
        (convention dL = 2 Re tr(cog^H dP)): project out the radial
        component the normalization discards, then split Re/Im."""
        r = np.linalg.norm(self.backing)
        radial = np.real(np.vdot(self.backing, cograd_p)) / r ** 2
        g = (np.sqrt(self.total_power) / r) * (cograd_p - radial * self.backing)
        return np.concatenate([2.0 * g.real.ravel(), 2.0 * g.imag.ravel()])

    def as_precoder(self, beta):
        return Precoder(self.matrix(), self.total_power, beta)
