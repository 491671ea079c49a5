import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metaopt import autodiff as ad
from metaopt.channels import (AntennaArray, CsitEnsemble, RisLink, RisPathloss, UserGroupLayout,
                              sample_csit_ensemble, sample_ris_link, steering_matrix)
from metaopt.errors import RankDeficientChannel
from metaopt.linalg import make_rng, split
from metaopt.meta import MlpSpec
from metaopt.objectives import (HrsmaObjective, PrecoderCodec, RisObjective, RisRunSettings,
                                ScatteringParams, hrsma_meta_loss, isac_meta_loss, power_projection,
                                project_power, reciprocal_phi, ris_meta_loss, ris_mrt_init,
                                ris_warm_start, run_ris, svd_mrt_init, unitarity_penalty,
                                zero_params)
from metaopt.rates import PrecoderMatrix, SafRates, probing_power, ris_user_rates, saf_rates

from conftest import crandn, rel_err


def _setup(seed=0, n_t=4, K=3, G=1, M=4, sigma=0.5):
    lay = UserGroupLayout.equal_groups(K, G, np.linspace(-0.5, 0.5, G), np.pi / 8)
    arr = AntennaArray.uca(n_t)
    return lay, arr, sample_csit_ensemble(make_rng(seed), lay, arr, sigma, M)


def test_codec_round_trip_and_sdma_columns(rng):
    lay, _, _ = _setup(K=3, G=2)
    P = crandn(rng, 4, 6)
    full = PrecoderCodec.for_layout(4, lay, "hrsma")
    assert full.size == 2 * 4 * 6
    np.testing.assert_array_equal(full.decode(full.encode(P)), P)
    sd = PrecoderCodec.for_layout(4, lay, "sdma")
    assert sd.size == 2 * 4 * 3
    out = sd.decode(sd.encode(P))
    np.testing.assert_array_equal(out[:, :3], 0)
    np.testing.assert_array_equal(out[:, 3:], P[:, 3:])


def test_project_power_examples(rng):
    P = crandn(rng, 3, 2)
    tr = np.sum(np.abs(P) ** 2)
    inner = project_power(PrecoderMatrix(P, 2 * tr))
    np.testing.assert_array_equal(inner.data, P)
    out = project_power(PrecoderMatrix(P, tr / 4))
    np.testing.assert_allclose(out.data, P / 2, rtol=1e-15)
    assert out.trace == pytest.approx(tr / 4, rel=1e-14)


@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
def test_projection_never_exceeds_budget(seed, power):
    x = np.random.default_rng(seed).standard_normal(10) * 10
    assert np.sum(np.asarray(power_projection(power)(x)) ** 2) <= power * (1 + 1e-12)


def test_projection_is_differentiated_through_scaling():
    proj = power_projection(1.0)
    f = lambda x: ad.sum_(proj(x) * np.arange(1.0, 5.0))
    x = np.array([1.0, 2.0, -0.5, 0.3])
    _, g = ad.value_and_grad(f, x)
    assert rel_err(g, ad.finite_diff_grad(f, x)) < 1e-7


def test_hrsma_loss_examples():
    saf = SafRates(np.array([1.0]), np.array([0.5]), np.array([0.1]), np.float64(1.0), np.array([0.5]))
    assert hrsma_meta_loss(saf, np.array([0.3]), [0.0], 10.0) == pytest.approx(-1.6)
    assert hrsma_meta_loss(saf, np.array([0.1]), [0.25], 10.0) == pytest.approx(-1.6 + 1.5)


def test_isac_loss_examples(rng):
    lay, arr, ens = _setup()
    P = crandn(rng, 4, 5)
    saf = saf_rates(ens, P, lay)
    targets = [-0.4, 0.7]
    base = isac_meta_loss(saf, P, targets, arr, 0.0)
    assert base == pytest.approx(hrsma_meta_loss(saf, saf.private, np.zeros(3), 10.0))
    pp = probing_power(P, targets, arr)
    diff = isac_meta_loss(saf, P, targets, arr, 1e-1) - isac_meta_loss(saf, P, targets, arr, 1e-5)
    assert diff == pytest.approx((1e-5 - 1e-1) * pp, rel=1e-10)
    zero = saf_rates(ens, np.zeros((4, 5)), lay)
    assert isac_meta_loss(zero, np.zeros((4, 5)), targets, arr, 0.1) == 0.0


def test_objective_matches_loss_functions(rng):
    lay, arr, ens = _setup(K=3, G=1)
    codec = PrecoderCodec.for_layout(4, lay)
    P = crandn(rng, 4, 5)
    x = codec.encode(P)
    saf = saf_rates(ens, P, lay)
    obj = HrsmaObjective(ens, lay, codec, 1.0, 0.5, 10.0)
    m = obj.metrics(x)
    assert m["loss"] == pytest.approx(hrsma_meta_loss(saf, m["allocated"], [0.5] * 3, 10.0), rel=1e-12)
    assert m["asr"] == pytest.approx(float(saf.asr), rel=1e-12)
    assert m["qos_violations"] == int(np.sum(m["allocated"] < 0.5))
    isac = HrsmaObjective(ens, lay, codec, 1.0, None, 1e-2, [0.3], arr)
    assert isac(x) == pytest.approx(isac_meta_loss(saf, P, [0.3], arr, 1e-2), rel=1e-12)


def _grad_check(loss, x, tol=1e-4):
    _, g = ad.value_and_grad(loss, x)
    return rel_err(g, ad.finite_diff_grad(loss, x, 1e-5)) <= tol


@pytest.mark.parametrize("lam,th", [(0.0, 0.0), (10.0, 0.25), (10.0, 2.0)])
def test_hrsma_gradient(lam, th):
    lay, _, ens = _setup(seed=3, K=3, G=2)
    codec = PrecoderCodec.for_layout(4, lay)
    obj = HrsmaObjective(ens, lay, codec, 1.0, th, lam)
    x = codec.encode(svd_mrt_init(ens, lay, 10.0).data) + 0.1 * np.random.default_rng(0).standard_normal(codec.size)
    assert _grad_check(obj, x)


def test_ris_loss_examples(rng):
    link = sample_ris_link(make_rng(0), 3, 2, 4)
    P = ris_mrt_init(link, np.eye(4), 1.0)
    ident = ScatteringParams.identity(4, "reciprocal")
    sr = float(np.sum(ris_user_rates(link, np.eye(4), P)))
    assert ris_meta_loss(link, ident, P, 1.0) == pytest.approx(-sr, rel=1e-12)
    assert unitarity_penalty(split(2 * np.eye(4))) == pytest.approx(36.0)
    diag = ScatteringParams.identity(4)
    assert ris_meta_loss(link, diag, P, 1.0) == pytest.approx(-sr, rel=1e-12)


def test_reciprocal_phi_is_symmetric(rng):
    u = rng.standard_normal(4 * 5)
    re, im = reciprocal_phi(u, 4)
    np.testing.assert_array_equal(re, re.T)
    np.testing.assert_array_equal(im, im.T)
    phi = crandn(rng, 4, 4)
    phi = phi + phi.T
    np.testing.assert_array_equal(ScatteringParams.from_matrix(phi).matrix(), phi)


def test_diagonal_mode_is_unit_modulus(rng):
    p = ScatteringParams("diagonal", rng.uniform(0, 2 * np.pi, 6), 6)
    np.testing.assert_allclose(np.abs(np.diag(p.matrix())), 1.0, atol=1e-15)
    emb = p.embed()
    assert emb.mode == "reciprocal"
    m = emb.matrix()
    np.testing.assert_allclose(m.conj().T @ m, np.eye(6), atol=1e-15)
    np.testing.assert_array_equal(m - np.diag(np.diag(m)), 0)


@pytest.mark.parametrize("mode", ["diagonal", "reciprocal"])
def test_ris_gradient(mode):
    link = sample_ris_link(make_rng(1), 3, 2, 3)
    link = RisLink(link.g * 1e3, link.h * 1e2, 1.0, link.pathloss)
    obj = RisObjective(link, mode, 3, 1.0)
    r = np.random.default_rng(2)
    x = obj.codec.encode(crandn(r, 3, 2))
    v = r.standard_normal(3 if mode == "diagonal" else 12)
    assert _grad_check(lambda t: obj(t, v), x)
    assert _grad_check(lambda t: obj(x, t), v)


def test_literal_diag_penalty_flag():
    link = sample_ris_link(make_rng(1), 2, 2, 3)
    w = np.array([0.0, np.pi, np.pi / 2])
    x = RisObjective(link, "diagonal", 3).codec.encode(np.ones((2, 2)))
    plain = RisObjective(link, "diagonal", 3, 1.0)
    literal = RisObjective(link, "diagonal", 3, 1.0, literal_diag_penalty=True)
    assert literal(x, w) - plain(x, w) == pytest.approx(0 + 4 + 2)


def test_svd_mrt_single_user_collinear():
    lay = UserGroupLayout.equal_groups(1, 1, [0.0], 0.1)
    h = crandn(np.random.default_rng(0), 4, 1)
    P = svd_mrt_init(CsitEnsemble(h, h[None], 0.0), lay, 5.0)
    u = h[:, 0] / np.linalg.norm(h)
    for d in range(3):
        col = P.data[:, d] / np.linalg.norm(P.data[:, d])
        assert abs(abs(col.conj() @ u) - 1) < 1e-12
    assert P.trace == pytest.approx(5.0, rel=1e-12)


def test_svd_mrt_orthogonal_channel_picks_stronger_user():
    lay = UserGroupLayout.equal_groups(2, 1, [0.0], 0.1)
    H = np.array([[1.0, 0.0], [0.0, 3.0]], complex)
    P = svd_mrt_init(CsitEnsemble(H, H[None], 0.0), lay, 1.0)
    assert abs(P.data[1, 0]) == pytest.approx(np.sqrt(0.7))
    assert abs(P.data[0, 0]) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(RankDeficientChannel):
        svd_mrt_init(CsitEnsemble(np.zeros((2, 2)), np.zeros((1, 2, 2)), 0.0), lay, 1.0)


def test_warm_start_with_zero_networks_is_identity():
    link = sample_ris_link(make_rng(0), 3, 2, 4)
    p0 = ris_mrt_init(link, np.eye(4), 1.0)
    specs = (MlpSpec.ris(12, 8), MlpSpec.ris(4, 8))
    phi, res = ris_warm_start(link, p0, 4, 1, None, RisRunSettings(hidden=8), 1.0, zero_params(specs))
    np.testing.assert_allclose(phi.matrix(), np.eye(4), atol=1e-15)
    assert res.best_iteration == 0


def test_run_ris_buffers_and_keeps_feasibility():
    link = sample_ris_link(make_rng(4), 3, 2, 4)
    s = RisRunSettings(T=60, hidden=16)
    res, obj, x0, v0 = run_ris(link, 1.0, "diagonal", s, np.random.default_rng(0))
    assert res.best_loss <= res.initial_loss
    assert np.all(np.diff(res.best_losses) <= 0)
    assert np.sum(res.best[0] ** 2) <= 1.0 * (1 + 1e-9)
    res, obj, x0, v0 = run_ris(link, 1.0, "reciprocal", s, np.random.default_rng(0))
    re, im = obj.phi(res.best[1])
    np.testing.assert_array_equal(re, re.T)
