"""Scenario execution, result records and CSV output.

Work items are ``(realization, snr index, lambda index)`` triples.  Channel
draws depend only on ``(seed, realization)`` so every grid point and every
suite sees the same channels; MLP initializations use their own stream.
"""
import csv
import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..channels import (AntennaArray, RisPathloss, UserGroupLayout, correlation_roots,
                        default_group_azimuths, sample_csit_ensemble, sample_ris_link)
from ..errors import MetaOptError, NonFiniteLoss
from ..linalg import make_rng
from ..meta import MlpSpec, meta_optimize_single
from ..objectives import (HrsmaObjective, PrecoderCodec, RisRunSettings,
                          power_projection, ris_mrt_init, ris_warm_start, run_ris, svd_mrt_init)
from ..rates import beampattern

CSV_COLUMNS = ("suite", "seed", "realization", "snr_db", "lambda", "esr", "probing_power",
               "qos_violations", "initial_loss", "final_loss", "seconds")

# RNG stream tags under (seed, realization)
CHANNEL_STREAM, MLP_STREAM, BDRIS_STREAM = 0, 1, 2


@dataclass
class ResultRecord:
    suite: str
    seed: int
    realization: int
    snr_db: float
    lam: float
    esr: float  # best ASR (or sum rate for ris/bdris) of this realization
    probing_power: float
    qos_violations: int
    initial_loss: float
    final_loss: float
    seconds: float = float("nan")
    allocated: np.ndarray = field(default=None, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    def row(self, timing=False):
        return [self.suite, str(self.seed), str(self.realization), _f(self.snr_db), _f(self.lam),
                _f(self.esr), _f(self.probing_power), str(self.qos_violations),
                _f(self.initial_loss), _f(self.final_loss),
                _f(self.seconds) if timing else ""]


def _f(x):
    return format(float(x), ".17g")


# -- scenario construction ------------------------------------------------------

def build_array(cfg):
    return AntennaArray.uca(cfg.n_t) if cfg.array == "uca" else AntennaArray.ula(cfg.n_t, cfg.spacing)


def build_layout(cfg):
    az = cfg.group_azimuths if cfg.group_azimuths is not None else default_group_azimuths(cfg.g)
    return UserGroupLayout.equal_groups(cfg.k, cfg.g, az, cfg.angular_spread)


def build_pathloss(cfg):
    return RisPathloss(cfg.xi0_db, cfg.d0, cfg.d_br, cfg.d_ru, cfg.eps_br, cfg.eps_ru, cfg.noise_dbm)


def work_items(cfg):
    return [(r, i, j) for r in range(cfg.realizations)
            for i in range(len(cfg.snr_db)) for j in range(len(cfg.lambdas))]


def _run_precoder_item(cfg, r, snr_db, lam):
    array, layout = build_array(cfg), build_layout(cfg)
    power = 10 ** (snr_db / 10)
    roots = correlation_roots(layout, array, cfg.quadrature_points)
    ens = sample_csit_ensemble(make_rng(cfg.seed, r, CHANNEL_STREAM), layout, array, cfg.sigma_e2,
                               cfg.m, cfg.quadrature_points, roots)
    mode = "sdma" if cfg.suite == "sdma" else "hrsma"
    split = (0.0, 0.0, 1.0) if mode == "sdma" else tuple(cfg.power_split)
    P0 = svd_mrt_init(ens, layout, power, split, mode)
    codec = PrecoderCodec.for_layout(cfg.n_t, layout, mode)
    targets = cfg.targets if cfg.suite == "isac" else None
    obj = HrsmaObjective(ens, layout, codec, cfg.noise_power, cfg.thresholds, lam,
                         targets, array, cfg.steering)
    x0 = codec.encode(P0)
    res = meta_optimize_single(obj, x0, MlpSpec.precoder(x0.size, cfg.hidden), cfg.t, cfg.lr,
                               make_rng(cfg.seed, r, MLP_STREAM), power_projection(power))
    best = res.best[0]
    m, m0 = obj.metrics(best), obj.metrics(x0)
    extras = {
        "initial_esr": m0["asr"],
        "power_trace": float(np.sum(best ** 2)),
        "power": power,
        "best_losses": res.best_losses,
        "best_iteration": res.best_iteration,
        "precoder": codec.decode(best),
        "input_digests": res.input_digests,
    }
    return dict(esr=m["asr"], probing_power=m["probing_power"], qos_violations=m["qos_violations"],
                initial_loss=res.initial_loss, final_loss=res.best_loss, allocated=m["allocated"],
                extras=extras)


def _run_ris_item(cfg, r, power_dbm, lam):
    power = 10 ** ((power_dbm - 30) / 10)
    link = sample_ris_link(make_rng(cfg.seed, r, CHANNEL_STREAM), cfg.n_t, cfg.k, cfg.b,
                           build_pathloss(cfg))
    settings = RisRunSettings(cfg.t, cfg.lr, cfg.lr_phi, cfg.hidden, lam, cfg.literal_diag_penalty)
    extras = {}
    if cfg.suite == "ris":
        res, obj, x0, v0 = run_ris(link, power, "diagonal", settings, make_rng(cfg.seed, r, MLP_STREAM))
    else:
        p_mrt = ris_mrt_init(link, np.eye(cfg.b), power)
        warm, wres = ris_warm_start(link, p_mrt, cfg.b, cfg.t_warm,
                                    make_rng(cfg.seed, r, MLP_STREAM), settings, power)
        if cfg.precoder_init == "warm":
            p0 = wres.best[0]
            p0 = (p0[: p0.size // 2] + 1j * p0[p0.size // 2:]).reshape(cfg.n_t, cfg.k)
        else:
            p0 = ris_mrt_init(link, warm.matrix(), power)
        res, obj, x0, v0 = run_ris(link, power, "reciprocal", settings,
                                   make_rng(cfg.seed, r, BDRIS_STREAM), warm, p0)
        extras["warm_loss"] = wres.best_loss
    x, v = res.best
    m, m0 = obj.metrics(x, v), obj.metrics(x0, v0)
    extras.update({
        "initial_esr": m0["sum_rate"],
        "power_trace": float(np.sum(x ** 2)),
        "power": power,
        "unitarity_error": m["unitarity_error"],
        "best_losses": res.best_losses,
        "best_iteration": res.best_iteration,
        "phi": obj.phi(v),
        "input_digests": res.input_digests,
    })
    return dict(esr=m["sum_rate"], probing_power=float("nan"), qos_violations=0,
                initial_loss=res.initial_loss, final_loss=res.best_loss, allocated=None,
                extras=extras)


def _context_error(exc, ctx):
    msg = f"{ctx}: {exc}"
    if isinstance(exc, NonFiniteLoss):
        return NonFiniteLoss(msg, exc.iteration)
    try:
        return type(exc)(msg)
    except TypeError:
        return MetaOptError(msg)


def run_item(cfg, item):
    r, i, j = item
    snr, lam = float(cfg.snr_db[i]), float(cfg.lambdas[j])
    start = time.perf_counter()
    try:
        if cfg.is_ris:
            out = _run_ris_item(cfg, r, snr, lam)
        else:
            out = _run_precoder_item(cfg, r, snr, lam)
    except (MetaOptError, FloatingPointError) as exc:
        ctx = f"suite={cfg.suite} seed={cfg.seed} realization={r} snr_db={snr} lambda={lam}"
        raise _context_error(exc, ctx) from exc
    return ResultRecord(cfg.suite, cfg.seed, r, snr, lam, seconds=time.perf_counter() - start, **out)


def _run_item_packed(args):
    return run_item(*args)


def run_scenario(cfg, parallel=1):
    """Run every (realization, snr, lambda) item; records come back in item order."""
    items = work_items(cfg)
    if parallel <= 1 or len(items) == 1:
        return [run_item(cfg, it) for it in items]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        # map preserves submission order regardless of completion order
        return list(pool.map(_run_item_packed, [(cfg, it) for it in items]))


def tradeoff_sweep(cfg, parallel=1):
    """One scenario pass per lambda of an ISAC config."""
    if cfg.suite != "isac":
        raise ValueError(f"tradeoff sweeps need suite=isac, got {cfg.suite}")
    out = []
    for lam in cfg.lambdas:
        out.extend(run_scenario(dataclasses.replace(cfg, lambdas=[lam]), parallel))
    return out


def summarize(records):
    """Mean ESR, probing power and QoS violations per (suite, snr, lambda)."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.suite, rec.snr_db, rec.lam), []).append(rec)
    out = []
    for (suite, snr, lam), recs in groups.items():
        out.append({
            "suite": suite, "snr_db": snr, "lambda": lam, "realizations": len(recs),
            "esr": float(np.mean([r.esr for r in recs])),
            "probing_power": float(np.mean([r.probing_power for r in recs])),
            "qos_violations": float(np.mean([r.qos_violations for r in recs])),
        })
    return out


# -- beampatterns ---------------------------------------------------------------

@dataclass
class BeampatternTable:
    angles: np.ndarray
    total: np.ndarray
    common: np.ndarray  # global common stream
    groups: np.ndarray  # (n_angles, G), group common streams
    private: np.ndarray  # summed over users

    @property
    def columns(self):
        G = self.groups.shape[1]
        return ("angle", "total", "common", *[f"group_{g + 1}" for g in range(G)], "private")

    def as_array(self):
        return np.column_stack([self.angles, self.total, self.common, self.groups, self.private])


def beampattern_table(P, array, n_groups, resolution=361, form="auto"):
    """Pattern of the ``[p_c | p_c,1..G | p_1..K]`` precoder on a uniform grid over [-pi/2, pi/2]."""
    if resolution < 2:
        raise ValueError("need at least two grid points")
    angles = np.linspace(-np.pi / 2, np.pi / 2, resolution)
    total, streams = beampattern(P, array, angles, per_stream=True, form=form)
    return BeampatternTable(angles, total, streams[:, 0], streams[:, 1:1 + n_groups],
                            streams[:, 1 + n_groups:].sum(axis=1))


def beampattern_dump(cfg, resolution=361, precoder=None):
    """Beampattern of ``precoder``, or of the buffered precoder of realization 0
    at the first SNR and the largest lambda of an ISAC config."""
    if precoder is None:
        if cfg.suite != "isac":
            raise ValueError(f"beampattern dumps need suite=isac, got {cfg.suite}")
        j = int(np.argmax(cfg.lambdas))
        rec = run_item(cfg, (0, 0, j))
        precoder = rec.extras["precoder"]
    return beampattern_table(precoder, build_array(cfg), cfg.g, resolution, cfg.steering)


def target_gain(table, targets):
    """Pattern at the grid points nearest each target over the grid median."""
    med = float(np.median(table.total))
    idx = [int(np.argmin(np.abs(table.angles - t))) for t in targets]
    return [float(table.total[i]) / med if med > 0 else math.inf for i in idx]


# -- CSV ------------------------------------------------------------------------

def write_csv(records, path, timing=False):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.row(timing))


def read_csv(path):
    """Parse a results file back into records (extras are not stored)."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        for row in reader:
            d = dict(zip(header, row))
            out.append(ResultRecord(
                d["suite"], int(d["seed"]), int(d["realization"]), float(d["snr_db"]),
                float(d["lambda"]), float(d["esr"]), float(d["probing_power"]),
                int(d["qos_violations"]), float(d["initial_loss"]), float(d["final_loss"]),
                float(d["seconds"]) if d["seconds"] else float("nan")))
    return out


def write_table(table, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.as_array():
            w.writerow([_f(x) for x in row])
