import numpy as np
import pytest

from diffmvc.autoencoder import (
    LatentBank,
    LatentStatus,
    TrainConfig,
    ViewAutoencoder,
    encode_observed,
    reconstruction_loss,
    train_stage1,
)
from diffmvc.data import MultiViewDataset, SyntheticSpec, generate_mask, generate_synthetic
from diffmvc.errors import StageError
from diffmvc.nn import MlpSpec, ParamStore, Tensor, gradient_check, init_mlp, stream


def identity_ae(d: int) -> ViewAutoencoder:
    enc = MlpSpec([d, d], activation="identity")
    dec = MlpSpec([d, d], activation="identity")
    store = ParamStore()
    init_mlp(enc, store, "enc", stream(0, "id"))
    init_mlp(dec, store, "dec", stream(0, "id2"))
    for name in ("enc/W0", "dec/W0"):
        store[name].data[:] = np.eye(d)
    for name in ("enc/b0", "dec/b0"):
        store[name].data[:] = 0.0
    return ViewAutoencoder(encoder=enc, decoder=dec, store=store)


def small_dataset(n=8, d=3, seed=0) -> MultiViewDataset:
    rng = stream(seed, "ae-data")
    return MultiViewDataset(
        views=[rng.normal(size=(n, d)), rng.normal(size=(n, d))],
        labels=rng.integers(0, 2, size=n),
    )


def test_identity_autoencoder_has_zero_loss():
    data = small_dataset()
    mask = generate_mask(data.n, eta=0.0, seed=0)
    aes = [identity_ae(3), identity_ae(3)]
    assert reconstruction_loss(aes, data, mask).item() == pytest.approx(0.0, abs=1e-18)


def test_hand_case_loss_half():
    # view 1 reconstructs x + 0.5, view 2 is the identity: loss = 0.25 + 0.25
    ae1 = identity_ae(1)
    ae1.store["dec/b0"].data[:] = 0.5
    ae2 = identity_ae(1)
    data = MultiViewDataset(views=[np.array([[1.0], [2.0]]), np.array([[1.0], [2.0]])])
    mask = generate_mask(2, eta=0.0, seed=0)
    assert reconstruction_loss([ae1, ae2], data, mask).item() == pytest.approx(0.5)


def test_masked_rows_contribute_exactly_zero():
    data = small_dataset()
    mask = generate_mask(data.n, eta=0.0, seed=0)
    mask.M[3, 1] = 0.0
    rng = stream(4, "ae-build")
    aes = [ViewAutoencoder.build(3, 2, [5], rng) for _ in range(2)]

    base = reconstruction_loss(aes, data, mask).item()
    perturbed = MultiViewDataset(
        views=[data.views[0].copy(), data.views[1].copy()], labels=data.labels
    )
    perturbed.views[1][3] += 1e6
    assert reconstruction_loss(aes, perturbed, mask).item() == base


def test_mask_gating_zeroes_decoder_output_gradient():
    # gradient w.r.t. the reconstruction itself vanishes on masked rows
    rng = stream(5, "gate")
    X = rng.normal(size=(4, 3))
    m = np.array([1.0, 0.0, 1.0, 0.0])
    recon = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    loss = ((((recon - X) ** 2).sum(axis=1)) * m).sum()
    loss.backward()
    assert np.all(recon.grad[1] == 0.0)
    assert np.all(recon.grad[3] == 0.0)
    assert np.any(recon.grad[0] != 0.0)


def test_reconstruction_gradient_matches_fd():
    data = small_dataset(n=6, d=3, seed=2)
    mask = generate_mask(data.n, eta=0.3, seed=2)
    rng = stream(6, "ae-fd")
    aes = [ViewAutoencoder.build(3, 2, [4], rng) for _ in range(2)]
    for ae in aes:
        err = gradient_check(lambda: reconstruction_loss(aes, data, mask), ae.store, h=1e-5)
        assert err < 1e-4


def test_view_specific_params_do_not_cross():
    data = small_dataset()
    rng = stream(7, "ae-iso")
    aes = [ViewAutoencoder.build(3, 2, [4], rng) for _ in range(2)]
    before = aes[1].encode(data.views[1])
    aes[0].store["enc/W0"].data += 1.0
    after = aes[1].encode(data.views[1])
    assert np.array_equal(before, after)


def test_encode_is_deterministic_and_shaped():
    rng = stream(8, "ae-det")
    ae = ViewAutoencoder.build(4, 3, [6], rng)
    X = stream(8, "ae-det", "x").normal(size=(10, 4))
    z1, z2 = ae.encode(X), ae.encode(X)
    assert np.array_equal(z1, z2)
    assert z1.shape == (10, 3)
    assert ae.encode(X[:0]).shape == (0, 3)


def test_encode_observed_status_bookkeeping():
    data = small_dataset(n=10)
    mask = generate_mask(10, eta=0.4, seed=3)
    rng = stream(9, "ae-bank")
    aes = [ViewAutoencoder.build(3, 2, [4], rng) for _ in range(2)]
    bank = encode_observed(aes, data, mask)
    assert bank.count(LatentStatus.OBSERVED) == int(mask.M.sum())
    assert bank.count(LatentStatus.ABSENT) == int((mask.M == 0).sum())
    for v in range(2):
        missing = mask.missing_rows(v)
        assert np.all(bank.Z[v][missing] == 0.0)


def test_train_stage1_lr_zero_constant_curve():
    data = small_dataset(n=12)
    mask = generate_mask(12, eta=0.0, seed=0)
    rng = stream(10, "ae-lr0")
    aes = [ViewAutoencoder.build(3, 2, [4], rng) for _ in range(2)]
    curve = train_stage1(aes, data, mask, TrainConfig(epochs=5, batch_size=4, lr=0.0), seed=0)
    assert len(curve) == 5
    # batch partitions differ per epoch, so equality holds to summation order
    assert max(curve) - min(curve) < 1e-12 * max(curve)


def test_train_stage1_overfits_single_sample():
    data = MultiViewDataset(
        views=[np.array([[0.3, -0.7, 1.1]]), np.array([[0.9, 0.1, -0.4]])]
    )
    mask = generate_mask(1, eta=0.0, seed=0)
    rng = stream(11, "ae-overfit")
    aes = [ViewAutoencoder.build(3, 2, [8], rng) for _ in range(2)]
    train_stage1(aes, data, mask, TrainConfig(epochs=2000, batch_size=1, lr=1e-2, weight_decay=0.0), seed=1)
    final = reconstruction_loss(aes, data, mask).item()
    assert final < 1e-6


def test_train_stage1_seeded_rerun_identical():
    def run():
        data = small_dataset(n=16, seed=5)
        mask = generate_mask(16, eta=0.25, seed=5)
        rng = stream(12, "ae-rerun")
        aes = [ViewAutoencoder.build(3, 2, [4], rng) for _ in range(2)]
        train_stage1(aes, data, mask, TrainConfig(epochs=20, batch_size=8, lr=1e-3), seed=5)
        return [ae.store.copy_values() for ae in aes]

    a, b = run(), run()
    for sa, sb in zip(a, b):
        for name in sa:
            assert np.array_equal(sa[name], sb[name])


def test_train_stage1_divergence_aborts_with_stage_tag():
    data = small_dataset(n=12)
    mask = generate_mask(12, eta=0.0, seed=0)
    rng = stream(13, "ae-diverge")
    aes = [ViewAutoencoder.build(3, 2, [4], rng) for _ in range(2)]
    with pytest.raises(StageError, match="stage-1"):
        train_stage1(aes, data, mask, TrainConfig(epochs=60, batch_size=12, lr=1e12), seed=0)


def test_train_stage1_reconstruction_quality_on_synthetic():
    spec = SyntheticSpec(k=3, n=200, d_latent=4, view_dims=(12, 12), view_noise=0.02, separation=4.0, seed=21)
    data = generate_synthetic(spec)
    mask = generate_mask(200, eta=0.0, seed=21)
    rng = stream(21, "ae-quality")
    aes = [ViewAutoencoder.build(12, 8, [48], rng) for _ in range(2)]
    train_stage1(aes, data, mask, TrainConfig(epochs=500, batch_size=64, lr=3e-3), seed=21)
    for v in range(2):
        err = np.linalg.norm(aes[v].reconstruct(data.views[v]) - data.views[v], axis=1).mean()
        scale = np.linalg.norm(data.views[v], axis=1).mean()
        assert err < 0.05 * scale


def test_latent_bank_validation_and_copy():
    bank = LatentBank(
        Z=[np.zeros((3, 2)), np.ones((3, 2))],
        status=np.full((3, 2), LatentStatus.OBSERVED),
    )
    assert not bank.has_absent()
    dup = bank.copy()
    dup.Z[0][0, 0] = 9.0
    assert bank.Z[0][0, 0] == 0.0
    assert bank.concatenated().shape == (3, 4)
    with pytest.raises(ValueError):
        LatentBank(Z=[np.zeros((3, 2))], status=np.zeros((2, 1)))
