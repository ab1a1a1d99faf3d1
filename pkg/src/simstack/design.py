"""Model-based stack synthesis: SVD-matched target response and the
gradient fit of the device's transmission coefficients to it.

The design sets the target stack response to the conjugate transpose of
the channel's top left singular vectors, T = U[:, :N]^H, so that T H is
diagonal with the channel's singular values and the downlink decouples
into parallel single-user streams (unit diagonal gains; no extra rotation).
The physical layers cannot realize an arbitrary T exactly; the fit drives
the relative Frobenius mismatch ||G(tau) - T||_F / ||T||_F down by gradient
descent and reports the residual it reached.
"""

from dataclasses import dataclass

import numpy as np

from .optim import Adam
from .propagation import ForwardOperator, resolve_chain


class DegenerateChannelError(ValueError):
    """Channel matrix is numerically rank-deficient."""


@dataclass(frozen=True)
class SvdDesign:
    left_vectors: np.ndarray      # Q x N, orthonormal columns
    singular_values: np.ndarray   # K, nonincreasing
    target_forward: np.ndarray    # N x Q
    diagonal_gains: np.ndarray    # N, all ones here
    rotation: np.ndarray          # N x N identity here


def svd_target(h, n):
    """Target response for an N-antenna transmitter over channel h (Q x K).

    Requires Q >= n >= K and full column rank; with G = target_forward,
    G h has exactly the top-K singular values of h.
    """
    h = np.asarray(h)
    q, k = h.shape
    if not (q >= n >= k):
        raise ValueError(f"need Q >= N >= K, got Q={q}, N={n}, K={k}")
    u, s, _ = np.linalg.svd(h)
    if s[-1] <= 1e-12 * s[0]:
        raise DegenerateChannelError(f"smallest singular value {s[-1]} vs largest {s[0]}")
    left = u[:, :n]
    return SvdDesign(left_vectors=left,
                     singular_values=s,
                     target_forward=left.conj().T,
                     diagonal_gains=np.ones(n),
                     rotation=np.eye(n))


@dataclass
class FitResult:
    residual: float        # ||G - T||_F / ||T||_F at the returned iterate
    converged: bool
    n_iterations: int
    loss: float


def fit_sim_to_target(geometry, device, target, *, iterations=1000,
                      step_size=0.05, tolerance=1e-3):
    """Fit the device's transmission parameters so the stack response
    approaches `target` (N x Q) in relative Frobenius error.

    Mutates `device` to the best iterate found and returns a FitResult;
    converged=False flags a residual still at or above `tolerance`.
    A zero target degenerates the relative error, so the raw power
    ||G||_F^2 is minimized instead (amplitudes drive toward their floor).
    """
    ws = resolve_chain(geometry)
    target = np.asarray(target)
    tnorm2 = float(np.linalg.norm(target) ** 2)
    if tnorm2 == 0.0:
        tnorm2 = 1.0

    def loss_grad():
        fwd = ForwardOperator(ws, device.taus())
        err = fwd.matrix - target
        loss = float(np.linalg.norm(err) ** 2) / tnorm2
        gtau = fwd.tau_cogradients(err / tnorm2)
        return loss, device.param_grad(gtau)

    opt = Adam(device.n_params, step_size)
    best_loss, best_x = np.inf, device.flat()
    it = 0
    for it in range(1, iterations + 1):
        loss, grad = loss_grad()
        if loss < best_loss:
            best_loss, best_x = loss, device.flat()
        if np.sqrt(best_loss) < tolerance:
            break
        device.set_flat(device.flat() + opt.step(grad))
    else:
        # final iterate may be the best one
        loss, _ = loss_grad()
        if loss < best_loss:
            best_loss, best_x = loss, device.flat()
    device.set_flat(best_x)
    residual = float(np.sqrt(best_loss))
    return FitResult(residual=residual, converged=residual < tolerance,
                     n_iterations=it, loss=best_loss)
