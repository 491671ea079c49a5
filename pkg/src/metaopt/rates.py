"""Stream rates for H-RSMA/SDMA, sample-average rates, ISAC and RIS metrics.

The ``*_terms`` functions take precoders/scattering matrices as ``(re, im)``
pairs and only use autodiff-aware ops, so the same code serves plain
evaluation and tape recording.  The public functions wrap them for complex
numpy inputs.
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch
from .linalg import abs2, cmatmul, split

LN2 = np.log(2.0)


@dataclass
class PrecoderMatrix:
    """Columns ``[p_c | p_c,1..p_c,G | p_1..p_K]``; SDMA keeps common columns at zero."""

    data: np.ndarray
    power: float
    mode: str = "hrsma"  # "hrsma" | "sdma"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.mode not in ("hrsma", "sdma"):
            raise ValueError(f"unknown precoder mode {self.mode!r}")

    @property
    def trace(self):
        return float(np.sum(np.abs(self.data) ** 2))

    def n_groups(self, n_users):
        return self.data.shape[1] - n_users - 1


@dataclass
class StreamRates:
    common: np.ndarray  # R_c,k
    group: np.ndarray  # R_c,g,k for the user's own group
    private: np.ndarray  # R_k


@dataclass
class SafRates:
    common: object  # per-user SAF of the global common stream
    group: object  # per-user SAF of the own-group common stream
    private: object
    common_rate: object  # min over users
    group_rates: object  # per-group min over members

    @property
    def asr(self):
        return self.common_rate + ad.sum_(self.group_rates) + ad.sum_(self.private)


def _as_pair(P):
    if isinstance(P, PrecoderMatrix):
        P = P.data
    if isinstance(P, tuple):
        return P
    return split(P)


def hrsma_masks(layout):
    """0/1 masks of shape (K, D) selecting signal and interference columns."""
    K, G = layout.n_users, layout.n_groups
    D = 1 + G + K
    grp = np.array(layout.membership)
    users = np.arange(K)
    own_group = np.zeros((K, D))
    own_group[users, 1 + grp] = 1.0
    own_private = np.zeros((K, D))
    own_private[users, 1 + G + users] = 1.0
    all_groups = np.zeros((K, D))
    all_groups[:, 1:1 + G] = 1.0
    all_private = np.zeros((K, D))
    all_private[:, 1 + G:] = 1.0
    common_sig = np.zeros((K, D))
    common_sig[:, 0] = 1.0
    return {
        "common_sig": common_sig,
        "common_int": all_groups + all_private,
        "group_sig": own_group,
        "group_int": all_groups - own_group + all_private,
        "private_sig": own_private,
        "private_int": all_groups - own_group + all_private - own_private,
    }


def _check_dims(H, P_pair, layout):
    n_t, K = np.shape(H)[-2:]
    pr = ad.value(P_pair[0])
    if K != layout.n_users:
        raise DimensionMismatch(f"channel has {K} users, layout has {layout.n_users}")
    if pr.shape != (n_t, 1 + layout.n_groups + K):
        raise DimensionMismatch(
            f"precoder shape {pr.shape} != ({n_t}, {1 + layout.n_groups + K})")


def stream_rate_terms(H, P, layout, noise, masks=None):
    """Rates (R_c,k, R_c,g,k, R_k) for each channel in ``H``.

    ``H`` is ``(n_t, K)`` or a batch ``(M, n_t, K)`` of complex channels;
    results have shape ``(K,)`` or ``(M, K)``.
    """
    P = _as_pair(P)
    _check_dims(H, P, layout)
    masks = hrsma_masks(layout) if masks is None else masks
    Hh = np.swapaxes(np.asarray(H), -1, -2).conj()  # H^H
    gain = abs2(cmatmul(split(Hh), P))  # |h_k^H p_d|^2, (..., K, D)

    def rate(sig, interf):
        s = ad.sum_(gain * masks[sig], axis=-1)
        i = ad.sum_(gain * masks[interf], axis=-1) + noise
        return (ad.log(s + i) - ad.log(i)) / LN2

    return (rate("common_sig", "common_int"),
            rate("group_sig", "group_int"),
            rate("private_sig", "private_int"))


def hrsma_stream_rates(H, P, layout, noise=1.0):
    if noise <= 0:
        raise ValueError("noise power must be positive")
    c, g, p = stream_rate_terms(H, P, layout, noise)
    return StreamRates(np.asarray(c), np.asarray(g), np.asarray(p))


def saf_terms(samples, P, layout, noise, masks=None):
    c, g, p = stream_rate_terms(samples, P, layout, noise, masks)
    c, g, p = ad.mean(c, axis=0), ad.mean(g, axis=0), ad.mean(p, axis=0)
    group_min = [ad.min_(ad.getitem(g, np.array(m))) for m in layout.members]
    group_rates = ad.stack([ad.reshape(x, ()) for x in group_min]) if group_min else np.zeros(0)
    return SafRates(c, g, p, ad.min_(c), group_rates)


def saf_rates(ensemble, P, layout, noise=1.0):
    """Sample-average rates over the ensemble's channel samples."""
    saf = saf_terms(ensemble.samples, P, layout, noise)
    return SafRates(*(np.asarray(ad.value(x), dtype=float) for x in
                      (saf.common, saf.group, saf.private, saf.common_rate, saf.group_rates)))


def probing_terms(P, steering):
    """Sum over targets of a^H P P^H a; ``steering`` is (n_t, N) complex."""
    P = _as_pair(P)
    Ah = split(steering.conj().T)
    return ad.sum_(abs2(cmatmul(Ah, P)))


def probing_power(P, targets, array, form="auto"):
    from .channels import steering_matrix
    targets = np.atleast_1d(targets)
    if targets.size == 0:
        raise ValueError("need at least one target")
    return float(probing_terms(P, steering_matrix(array, targets, form)))


def beampattern(P, array, angles, per_stream=False, form="auto"):
    """Transmit beampattern a^H(t) P P^H a(t) over ``angles``.

    With ``per_stream`` also returns |a(t)^H p_d|^2 per column, shape
    ``(len(angles), D)``; its row sums equal the pattern.
    """
    from .channels import steering_matrix
    angles = np.atleast_1d(angles)
    if angles.size == 0:
        raise ValueError("empty angle grid")
    data = P.data if isinstance(P, PrecoderMatrix) else np.asarray(P)
    A = steering_matrix(array, angles, form)
    streams = np.abs(A.conj().T @ data) ** 2
    total = streams.sum(axis=1)
    return (total, streams) if per_stream else total


def ris_rate_terms(link, phi, P):
    """Per-user rates of the RIS link; ``phi`` is the (B, B) scattering pair."""
    P = _as_pair(P)
    B, n_t = link.g.shape
    K = link.h.shape[1]
    if ad.value(phi[0]).shape != (B, B) or ad.value(P[0]).shape != (n_t, K):
        raise DimensionMismatch("scattering matrix or precoder has the wrong shape")
    hh = split(link.h.conj().T)  # (K, B)
    cascade = cmatmul(cmatmul(hh, phi), split(link.g))  # h_k^H Phi G, (K, n_t)
    return _ris_rates(abs2(cmatmul(cascade, P)), K, link.noise_power)


def ris_rate_terms_diag(link, phases_pair, P):
    """Same as :func:`ris_rate_terms` for diagonal Phi = diag(phases)."""
    P = _as_pair(P)
    pr, pi = phases_pair
    hr, hi = split(link.h.conj().T)
    # (conj(h_k) * phi) elementwise, then times G
    wr = hr * pr - hi * pi
    wi = hr * pi + hi * pr
    cascade = cmatmul((wr, wi), split(link.g))
    K = link.h.shape[1]
    return _ris_rates(abs2(cmatmul(cascade, P)), K, link.noise_power)


def _ris_rates(gain, K, noise):
    eye = np.eye(K)
    total = ad.sum_(gain, axis=1) + noise
    interf = ad.sum_(gain * (1.0 - eye), axis=1) + noise
    return (ad.log(total) - ad.log(interf)) / LN2


def ris_user_rates(link, phi, P):
    return np.asarray(ris_rate_terms(link, split(phi), split(P)))
