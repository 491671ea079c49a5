"""Meta-losses, variable encodings, power projection and initializers.

Optimization variables are flat real vectors.  A complex block ``X`` is
stored as ``[Re(X).ravel(), Im(X).ravel()]``.
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .allocation import AllocationInput, allocation_affine
from .errors import RankDeficientChannel
from .linalg import abs2, cmatmul, join, split
from .meta import MlpSpec, meta_optimize_dual, mlp_zeros
from .rates import (PrecoderMatrix, SafRates, hrsma_masks, probing_terms, ris_rate_terms,
                    ris_rate_terms_diag, saf_terms)


# -- encodings ----------------------------------------------------------------

class PrecoderCodec:
    """Maps a real vector over the *active* columns to a full (re, im) precoder.

    In SDMA mode the common columns are not part of the vector and stay zero.
    """

    def __init__(self, n_t, n_cols, active=None):
        self.n_t, self.n_cols = n_t, n_cols
        self.active = np.arange(n_cols) if active is None else np.asarray(active)
        na = len(self.active)
        self.size = 2 * n_t * na
        if na == n_cols:
            self._gather = None
        else:
            # Index into concat([x, 0]); inactive entries point at the trailing zero.
            full = np.full((2, n_t, n_cols), self.size, dtype=int)
            full[:, :, self.active] = np.arange(self.size).reshape(2, n_t, na)
            self._gather = full

    @classmethod
    def for_layout(cls, n_t, layout, mode="hrsma"):
        K, G = layout.n_users, layout.n_groups
        active = None if mode == "hrsma" else np.arange(1 + G, 1 + G + K)
        return cls(n_t, 1 + G + K, active)

    def encode(self, P):
        P = np.asarray(P.data if isinstance(P, PrecoderMatrix) else P)[:, self.active]
        return np.concatenate([P.real.ravel(), P.imag.ravel()])

    def pair(self, x):
        if self._gather is None:
            full = ad.reshape(x, (2, self.n_t, self.n_cols))
        else:
            full = ad.getitem(ad.concat([x, np.zeros(1)]), self._gather)
        return full[0], full[1]

    def decode(self, x):
        return join(self.pair(np.asarray(x)))


def power_projection(power):
    """Tape-aware projection of a flat real vector onto ``||x||^2 <= power``."""

    def project(x):
        total = float(np.sum(np.square(ad.value(x))))
        if total <= power:
            return x
        return x * ad.sqrt(power / ad.sum_(ad.square(x)))

    return project


def project_power(P):
    """Scale ``P`` onto its power budget if it exceeds it."""
    tr = P.trace
    if tr <= P.power:
        return PrecoderMatrix(P.data.copy(), P.power, P.mode)
    return PrecoderMatrix(P.data * np.sqrt(P.power / tr), P.power, P.mode)


# -- H-RSMA / ISAC --------------------------------------------------------------

def _saf_vector(saf):
    return ad.concat([ad.reshape(saf.common_rate, (1,)), saf.group_rates, saf.private])


def hrsma_meta_loss(saf, alloc, thresholds, lam):
    """Negative ASR plus ``lam`` times the summed QoS shortfall.

    ``alloc`` is the allocated rate per user (array or tensor); the indicator
    is evaluated on its value.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    short = np.asarray(ad.value(alloc)) - thresholds < 0
    loss = -saf.asr
    if lam != 0 and short.any():
        loss = loss - lam * ad.sum_((alloc - thresholds) * short.astype(float))
    return loss


def isac_meta_loss(saf, P, targets, array, lam, form="auto"):
    from .channels import steering_matrix
    loss = -saf.asr
    if lam != 0:
        loss = loss - lam * probing_terms(P, steering_matrix(array, targets, form))
    return loss


class HrsmaObjective:
    """SAA meta-loss of one CSIT realization as a function of the precoder vector.

    With ``targets`` set it becomes the ISAC loss (``lam`` then weighs the
    probing power); otherwise ``lam`` weighs the QoS penalty.
    """

    def __init__(self, ensemble, layout, codec, noise=1.0, thresholds=None, lam=10.0,
                 targets=None, array=None, steering_form="auto"):
        self.samples = ensemble.samples
        self.layout = layout
        self.codec = codec
        self.noise = noise
        K = layout.n_users
        self.thresholds = np.zeros(K) if thresholds is None else np.broadcast_to(
            np.asarray(thresholds, float), (K,)).copy()
        self.lam = lam
        self.masks = hrsma_masks(layout)
        self.targets = None if targets is None else np.atleast_1d(targets)
        self.array = array
        if self.targets is not None:
            from .channels import steering_matrix
            self.steering = steering_matrix(array, self.targets, steering_form)

    def saf(self, x):
        return saf_terms(self.samples, self.codec.pair(x), self.layout, self.noise, self.masks)

    def allocation(self, saf):
        inp = AllocationInput(float(ad.value(saf.common_rate)),
                              np.asarray(ad.value(saf.group_rates)),
                              np.asarray(ad.value(saf.private)), self.thresholds)
        A, b, values = allocation_affine(inp, self.layout)
        return A, b, values

    def __call__(self, x):
        saf = self.saf(x)
        if self.targets is not None:
            loss = -saf.asr
            if self.lam != 0:
                loss = loss - self.lam * probing_terms(self.codec.pair(x), self.steering)
            return loss
        if self.lam == 0 or not np.any(self.thresholds > 0):
            return -saf.asr
        A, b, _ = self.allocation(saf)
        alloc = A @ _saf_vector(saf) + b
        return hrsma_meta_loss(saf, alloc, self.thresholds, self.lam)

    def metrics(self, x):
        """Plain-number summary of the precoder ``x``."""
        saf = self.saf(np.asarray(x))
        _, _, alloc = self.allocation(saf)
        out = {
            "asr": float(saf.asr),
            "allocated": alloc,
            "qos_violations": int(np.sum(alloc - self.thresholds < 0)),
            "loss": float(self(np.asarray(x))),
            "probing_power": float("nan"),
        }
        if self.targets is not None:
            out["probing_power"] = float(probing_terms(self.codec.pair(np.asarray(x)), self.steering))
        return out


def _dominant_left(M):
    if not np.any(np.abs(M) > 0):
        raise RankDeficientChannel("zero channel block")
    u, _, _ = np.linalg.svd(M, full_matrices=False)
    return u[:, 0]


def svd_mrt_init(ensemble, layout, power, split=(0.70, 0.25, 0.05), mode="hrsma"):
    """SVD directions for the common streams, MRT for the private ones."""
    fg, fgr, fp = split
    if abs(fg + fgr + fp - 1.0) > 1e-12:
        raise ValueError("power split fractions must sum to one")
    H = ensemble.h_hat if hasattr(ensemble, "h_hat") else np.asarray(ensemble)
    n_t, K = H.shape
    G = layout.n_groups
    norms = np.linalg.norm(H, axis=0)
    if np.any(norms == 0):
        raise RankDeficientChannel("channel has a zero column")
    P = np.zeros((n_t, 1 + G + K), dtype=np.complex128)
    if fg > 0:
        P[:, 0] = np.sqrt(fg * power) * _dominant_left(H)
    if fgr > 0:
        for g, users in enumerate(layout.members):
            P[:, 1 + g] = np.sqrt(fgr * power / G) * _dominant_left(H[:, list(users)])
    P[:, 1 + G:] = np.sqrt(fp * power / K) * H / norms
    return PrecoderMatrix(P, power, mode)


# -- RIS / BD-RIS ----------------------------------------------------------------

@dataclass
class ScatteringParams:
    """RIS variable: ``B`` phases (diagonal) or the real/imag upper triangle (reciprocal)."""

    mode: str  # "diagonal" | "reciprocal"
    values: np.ndarray
    n_elements: int

    @classmethod
    def identity(cls, B, mode="diagonal"):
        if mode == "diagonal":
            return cls(mode, np.zeros(B), B)
        return cls.from_matrix(np.eye(B))

    @classmethod
    def from_matrix(cls, phi):
        B = phi.shape[0]
        iu = np.triu_indices(B)
        u = phi[iu]
        return cls("reciprocal", np.concatenate([u.real, u.imag]), B)

    def matrix(self):
        if self.mode == "diagonal":
            return np.diag(np.exp(1j * self.values))
        return join(reciprocal_phi(self.values, self.n_elements))

    def embed(self):
        """Diagonal phases as a reciprocal-mode variable."""
        if self.mode == "reciprocal":
            return self
        return ScatteringParams.from_matrix(self.matrix())


def _triangle_gather(B):
    n = B * (B + 1) // 2
    pos = np.zeros((B, B), dtype=int)
    iu = np.triu_indices(B)
    pos[iu] = np.arange(n)
    pos[(iu[1], iu[0])] = np.arange(n)
    return np.stack([pos, pos + n])


_GATHER_CACHE = {}


def reciprocal_phi(u, B):
    """Symmetric Phi pair from the real/imag upper-triangle vector."""
    if B not in _GATHER_CACHE:
        _GATHER_CACHE[B] = _triangle_gather(B)
    full = ad.getitem(u, _GATHER_CACHE[B])
    return full[0], full[1]


def phase_pair(w):
    return ad.cos(w), ad.sin(w)


def unitarity_penalty(phi):
    """||Phi^H Phi - I||_F^2 for a (re, im) pair."""
    re, im = phi
    gram = cmatmul((ad.transpose(re), -ad.transpose(im)), phi)
    B = np.shape(ad.value(re))[0]
    return ad.sum_(abs2((gram[0] - np.eye(B), gram[1])))


def ris_meta_loss(link, variable, P, lam, literal_diag_penalty=False):
    """Negative sum rate plus ``lam`` times the scattering-matrix penalty.

    ``P`` is a complex precoder or its real vector encoding.
    """
    obj = RisObjective(link, variable.mode, variable.n_elements, lam, literal_diag_penalty)
    if not isinstance(P, ad.Tensor) and np.iscomplexobj(P):
        P = obj.codec.encode(P)
    return obj(P, variable.values)


class RisObjective:
    """Joint loss of (precoder vector, RIS vector) for one channel realization."""

    def __init__(self, link, mode, n_elements, lam=1.0, literal_diag_penalty=False):
        self.link = link
        self.mode = mode
        self.B = n_elements
        self.lam = lam
        self.literal = literal_diag_penalty
        n_t = link.g.shape[1]
        K = link.h.shape[1]
        self.codec = PrecoderCodec(n_t, K)

    def phi(self, v):
        if self.mode == "diagonal":
            return phase_pair(v)
        return reciprocal_phi(v, self.B)

    def rates(self, x, v):
        P = self.codec.pair(x)
        if self.mode == "diagonal":
            return ris_rate_terms_diag(self.link, phase_pair(v), P)
        return ris_rate_terms(self.link, reciprocal_phi(v, self.B), P)

    def penalty(self, v):
        if self.mode == "diagonal":
            if not self.literal:
                return 0.0
            re, im = phase_pair(v)
            return ad.sum_(ad.square(re - 1.0) + ad.square(im))
        return unitarity_penalty(reciprocal_phi(v, self.B))

    def __call__(self, x, v):
        loss = -ad.sum_(self.rates(x, v))
        if self.lam != 0:
            pen = self.penalty(v)
            if isinstance(pen, ad.Tensor) or pen != 0:
                loss = loss + self.lam * pen
        return loss

    def metrics(self, x, v):
        x, v = np.asarray(x), np.asarray(v)
        pen = self.penalty(v) if self.mode == "reciprocal" else 0.0
        phi = join(self.phi(v))
        if self.mode == "diagonal":
            phi = np.diag(phi)
        return {
            "sum_rate": float(np.sum(self.rates(x, v))),
            "loss": float(self(x, v)),
            "unitarity_error": float(np.sqrt(pen)) if self.mode == "reciprocal"
            else float(np.linalg.norm(phi.conj().T @ phi - np.eye(self.B))),
        }


def ris_mrt_init(link, phi, power):
    """Equal-power MRT on the cascaded channels h_k^H Phi G."""
    cascade = link.h.conj().T @ phi @ link.g  # (K, n_t)
    norms = np.linalg.norm(cascade, axis=1)
    if np.any(norms == 0):
        raise RankDeficientChannel("cascaded channel has a zero row")
    K = cascade.shape[0]
    return np.sqrt(power / K) * (cascade.conj() / norms[:, None]).T


@dataclass
class RisRunSettings:
    T: int = 2500
    lr_precoder: float = 1e-3
    lr_phi: float = 1e-4
    hidden: int = 400
    lam: float = 1.0
    literal_diag_penalty: bool = False


def run_ris(link, power, mode, settings, rng, phi0=None, p0=None, params=None):
    """One dual-variable run; returns (MetaResult, objective, x0, v0)."""
    B = link.n_elements
    if phi0 is None:
        phi0 = ScatteringParams.identity(B, mode)
    if phi0.mode != mode:
        phi0 = phi0.embed()
    if p0 is None:
        p0 = ris_mrt_init(link, phi0.matrix(), power)
    obj = RisObjective(link, mode, B, settings.lam, settings.literal_diag_penalty)
    x0 = obj.codec.encode(p0)
    v0 = phi0.values
    specs = (MlpSpec.ris(x0.size, settings.hidden), MlpSpec.ris(v0.size, settings.hidden))
    res = meta_optimize_dual(obj, x0, v0, specs, settings.T,
                             (settings.lr_precoder, settings.lr_phi), rng,
                             (power_projection(power), None), params)
    return res, obj, x0, v0


def ris_warm_start(link, p0, n_elements, T_warm, rng, settings=None, power=None, params=None):
    """Meta-optimize a diagonal RIS, then embed its Phi as a reciprocal variable.

    Returns ``(ScatteringParams, MetaResult)``; the result's ``best[0]`` is the
    diagonal run's precoder, usable as a warm precoder too.
    """
    settings = settings or RisRunSettings()
    s = RisRunSettings(T_warm, settings.lr_precoder, settings.lr_phi, settings.hidden,
                       settings.lam, settings.literal_diag_penalty)
    if power is None:
        power = float(np.sum(np.abs(p0) ** 2))
    res, _, _, _ = run_ris(link, power, "diagonal", s, rng,
                           ScatteringParams.identity(n_elements), p0, params)
    diag = ScatteringParams("diagonal", res.best[1], n_elements)
    return diag.embed(), res


def zero_params(specs):
    return [mlp_zeros(s) for s in specs]
