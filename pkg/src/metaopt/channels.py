"""Antenna geometry, one-ring correlated channels, CSIT ensembles and RIS links."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpread, InconsistentGrouping
from .linalg import complex_normal, hermitian_sqrt


@dataclass(frozen=True)
class AntennaArray:
    """Element positions in wavelengths, shape ``(n, 2)``."""

    positions: np.ndarray
    geometry: str  # "circular" | "linear"
    spacing: float = 0.5

    @classmethod
    def uca(cls, n):
        """Uniform circular array with half-wavelength spacing between neighbours."""
        if n == 1:
            return cls(np.zeros((1, 2)), "circular")
        step = 2 * np.pi / n
        radius = 0.5 / np.sqrt((1 - np.cos(step)) ** 2 + np.sin(step) ** 2)
        ang = step * np.arange(n)
        return cls(radius * np.stack([np.cos(ang), np.sin(ang)], axis=1), "circular")

    @classmethod
    def ula(cls, n, spacing=0.5):
        # Elements sit on the -y axis so that the position-based phase
        # exp(-j 2 pi Psi(theta) . r_i) equals the closed form exp(j 2 pi i d sin theta).
        pos = np.zeros((n, 2))
        pos[:, 1] = -spacing * np.arange(n)
        return cls(pos, "linear", spacing)

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def radius(self):
        return float(np.max(np.linalg.norm(self.positions, axis=1)))


@dataclass(frozen=True)
class UserGroupLayout:
    membership: tuple  # group index of each user
    azimuths: np.ndarray  # per user, radians
    spreads: np.ndarray  # per user, radians
    n_groups: int

    def __post_init__(self):
        if len(self.membership) != len(self.azimuths) or len(self.membership) != len(self.spreads):
            raise InconsistentGrouping("membership, azimuths and spreads differ in length")
        if any(g < 0 or g >= self.n_groups for g in self.membership):
            raise InconsistentGrouping("group index out of range")
        if any(len(m) == 0 for m in self.members):
            raise InconsistentGrouping("every group needs at least one user")

    @classmethod
    def equal_groups(cls, n_users, n_groups, group_azimuths, spread):
        """Contiguous, near-equal groups; users share their group's azimuth."""
        if not 1 <= n_groups <= n_users:
            raise InconsistentGrouping(f"cannot split {n_users} users into {n_groups} groups")
        group_azimuths = np.broadcast_to(np.asarray(group_azimuths, float), (n_groups,))
        spreads = np.broadcast_to(np.asarray(spread, float), (n_groups,))
        sizes = [n_users // n_groups + (g < n_users % n_groups) for g in range(n_groups)]
        membership = tuple(g for g, s in enumerate(sizes) for _ in range(s))
        idx = np.array(membership)
        return cls(membership, group_azimuths[idx].copy(), spreads[idx].copy(), n_groups)

    @property
    def n_users(self):
        return len(self.membership)

    @property
    def members(self):
        return [tuple(k for k, g in enumerate(self.membership) if g == grp)
                for grp in range(self.n_groups)]

    @property
    def sizes(self):
        return [len(m) for m in self.members]


def default_group_azimuths(n_groups):
    """Group directions used by the reference scenarios, else an even fan."""
    if n_groups == 9:
        return np.pi * np.array([-1 / 2, -3 / 8, -1 / 4, -1 / 8, 0, 1 / 8, 1 / 4, 3 / 8, 1 / 2])
    if n_groups == 4:
        return np.pi * np.array([-1 / 2, -1 / 6, 1 / 6, 1 / 2])
    if n_groups == 1:
        return np.zeros(1)
    return np.linspace(-np.pi / 2, np.pi / 2, n_groups)


def wave_vector(alpha):
    alpha = np.asarray(alpha, float)
    return np.stack([np.cos(alpha), np.sin(alpha)], axis=-1)


def one_ring_correlation(array, theta, spread, quadrature_points=128):
    """Spatial correlation of a one-ring scatterer model.

    Averages ``exp(-j 2 pi Psi(a) . (r_i - r_j))`` over departure angles
    ``a`` uniform on ``[theta - spread, theta + spread]`` with Gauss-Legendre
    quadrature.
    """
    if not spread > 0:
        raise DegenerateSpread(f"angular spread must be positive, got {spread}")
    x, w = np.polynomial.legendre.leggauss(int(quadrature_points))
    alpha = theta + spread * x
    # phase[q, i] = 2 pi Psi(alpha_q) . r_i
    phase = 2 * np.pi * wave_vector(alpha) @ array.positions.T
    a = np.exp(-1j * phase)
    # (1 / 2 spread) * spread * sum_q w_q a_i conj(a_j)
    R = 0.5 * (a.T * w) @ a.conj()
    R = 0.5 * (R + R.conj().T)
    np.fill_diagonal(R, 1.0)
    return R


@dataclass
class CsitEnsemble:
    h_hat: np.ndarray  # (n_t, K)
    samples: np.ndarray  # (M, n_t, K)
    sigma_e2: float
    roots: list = field(default_factory=list)  # R_k^(1/2) per user

    @property
    def n_samples(self):
        return self.samples.shape[0]


def correlation_roots(layout, array, quadrature_points=128):
    cache = {}
    roots = []
    for az, sp in zip(layout.azimuths, layout.spreads):
        key = (float(az), float(sp))
        if key not in cache:
            cache[key] = hermitian_sqrt(
                one_ring_correlation(array, az, sp, quadrature_points), tolerance=1e-9)
        roots.append(cache[key])
    return roots


def sample_csit_ensemble(rng, layout, array, sigma_e2, n_samples, quadrature_points=128, roots=None):
    """Draw one CSIT realization and ``n_samples`` channels conditioned on it."""
    if not 0.0 <= sigma_e2 <= 1.0:
        raise ValueError(f"sigma_e2 must lie in [0, 1], got {sigma_e2}")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if roots is None:
        roots = correlation_roots(layout, array, quadrature_points)
    n_t, K = array.n, layout.n_users
    g_hat = complex_normal(rng, (n_t, K))
    z = complex_normal(rng, (n_samples, n_t, K))
    h_hat = np.stack([roots[k] @ g_hat[:, k] for k in range(K)], axis=1)
    if sigma_e2 == 0.0:
        samples = np.broadcast_to(h_hat, (n_samples, n_t, K)).copy()
    else:
        err = np.stack([roots[k] @ z[:, :, k].T for k in range(K)], axis=2)  # (n_t, M, K)
        err = np.transpose(err, (1, 0, 2))
        samples = np.sqrt(1.0 - sigma_e2) * h_hat + np.sqrt(sigma_e2) * err
    return CsitEnsemble(h_hat, samples, float(sigma_e2), roots)


def steering_vector(array, theta, form="auto"):
    """Transmit steering vector toward ``theta`` (1-D, length ``n_t``).

    ``form="linear"`` gives ``[1, e^{j2pi d sin t}, ...]`` using the array's
    spacing, ``form="position"`` gives ``exp(-j 2pi Psi(t) . r_i)``; ``auto``
    picks the closed form for linear arrays and the position form otherwise.
    """
    if form == "auto":
        form = "linear" if array.geometry == "linear" else "position"
    if form == "linear":
        return np.exp(2j * np.pi * array.spacing * np.sin(theta) * np.arange(array.n))
    if form == "position":
        return np.exp(-2j * np.pi * (array.positions @ wave_vector(theta)))
    raise ValueError(f"unknown steering form {form!r}")


def steering_matrix(array, thetas, form="auto"):
    """Steering vectors as columns, shape ``(n_t, len(thetas))``."""
    return np.stack([steering_vector(array, t, form) for t in np.atleast_1d(thetas)], axis=1)


@dataclass(frozen=True)
class RisPathloss:
    xi0_db: float = -30.0
    d0: float = 1.0
    d_br: float = 50.0
    d_ru: float = 2.5
    eps_br: float = 2.0
    eps_ru: float = 2.0
    noise_dbm: float = -80.0

    def factor(self, d, eps):
        if d <= 0 or self.d0 <= 0:
            raise ValueError("distances must be positive")
        return 10 ** (self.xi0_db / 10) * (d / self.d0) ** (-eps)

    @property
    def xi_br(self):
        return self.factor(self.d_br, self.eps_br)

    @property
    def xi_ru(self):
        return self.factor(self.d_ru, self.eps_ru)

    @property
    def noise_power(self):
        """Noise power in watts."""
        return 10 ** ((self.noise_dbm - 30) / 10)


@dataclass
class RisLink:
    g: np.ndarray  # (B, n_t) transmitter -> RIS
    h: np.ndarray  # (B, K), column k is RIS -> user k
    noise_power: float
    pathloss: RisPathloss

    @property
    def n_elements(self):
        return self.g.shape[0]


def sample_ris_link(rng, n_t, n_users, n_elements, pathloss=RisPathloss()):
    g = complex_normal(rng, (n_elements, n_t))
    h = complex_normal(rng, (n_elements, n_users))
    return RisLink(np.sqrt(pathloss.xi_br) * g, np.sqrt(pathloss.xi_ru) * h,
                   pathloss.noise_power, pathloss)
