"""End-to-end orchestration: staged training, imputation, prediction,
missing-rate sweeps, ablation variants, and run records on disk."""
from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autoencoder import (
    LatentStatus,
    TrainConfig,
    ViewAutoencoder,
    encode_observed,
    reconstruction_loss,
    train_stage1,
)
from .clustering import ClusterHeads, HeadConfig, clustering_loss, predict, train_stage3
from .data import (
    MaskMatrix,
    MultiViewDataset,
    SyntheticSpec,
    generate_mask,
    generate_synthetic,
    load_manifest,
    save_matrix,
)
from .diffusion import (
    DenoiserNet,
    DiffusionConfig,
    NoiseSchedule,
    build_schedule,
    diffusion_loss_frozen,
    impute_missing,
    train_stage2,
)
from .errors import StageError
from .metrics import acc, ari, kmeans_best_of, nmi
from .nn import restore_into, save_checkpoint, stream, substream_seed

IMPUTATION_MODES = ("diffusion", "zero_padding", "none")


@dataclass
class ExperimentConfig:
    """Everything a run needs; every field has a default so config files can
    stay sparse. Stage order is fixed: reconstruction, diffusion, clustering."""

    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    manifest: str | None = None
    eta: float | None = 0.5
    k: int = 4
    seed: int = 0
    d_latent: int = 16
    ae_hidden: tuple[int, ...] = (64,)
    d_mid: int = 64
    d_feature: int = 32
    tau: float = 0.5
    imputation: str = "diffusion"
    stage1: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=200, batch_size=250, lr=3e-3))
    stage2: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=300, batch_size=250, lr=2e-3))
    stage3: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=200, batch_size=500, lr=2e-3))
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    out_dir: str | None = None

    def __post_init__(self):
        if self.imputation not in IMPUTATION_MODES:
            raise ValueError(f"imputation mode must be one of {IMPUTATION_MODES}")
        if (self.synthetic is None) == (self.manifest is None):
            raise ValueError("configure exactly one of synthetic spec or manifest path")
        if self.imputation == "none" and (self.eta or 0.0) != 0.0:
            raise ValueError("imputation mode 'none' is only valid with eta = 0")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["ae_hidden"] = list(self.ae_hidden)
        if self.synthetic is not None:
            doc["synthetic"]["view_dims"] = list(self.synthetic.view_dims)
            if isinstance(self.synthetic.view_noise, tuple):
                doc["synthetic"]["view_noise"] = list(self.synthetic.view_noise)
        return doc

    def snapshot(self) -> str:
        """Byte-stable serialization for reproducibility hashing."""
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "synthetic" in doc and doc["synthetic"] is not None:
            syn = dict(doc["synthetic"])
            if "view_dims" in syn:
                syn["view_dims"] = tuple(syn["view_dims"])
            if isinstance(syn.get("view_noise"), list):
                syn["view_noise"] = tuple(syn["view_noise"])
            doc["synthetic"] = SyntheticSpec(**syn)
        elif doc.get("manifest"):
            doc["synthetic"] = None
        for key in ("stage1", "stage2", "stage3"):
            if key in doc and isinstance(doc[key], dict):
                doc[key] = TrainConfig(**doc[key])
        if isinstance(doc.get("diffusion"), dict):
            doc["diffusion"] = DiffusionConfig(**doc["diffusion"])
        if "ae_hidden" in doc:
            doc["ae_hidden"] = tuple(doc["ae_hidden"])
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ValueError(f"malformed config {path}: {e}") from e
        return cls.from_dict(doc)


@dataclass
class RunRecord:
    config: dict
    metrics: dict | None
    final_losses: dict
    curves: dict
    stage_hashes: dict
    wall_clock: dict
    checkpoints: dict
    n_samples: int
    eta: float
    variant: str = "full"
    error: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class PipelineState:
    """Trained artifacts of one run, for evaluation and tests."""

    data: MultiViewDataset
    mask: MaskMatrix
    aes: list[ViewAutoencoder]
    bank: object
    sched: NoiseSchedule | None
    nets: dict[int, DenoiserNet] | None
    heads: ClusterHeads
    assignments: list[np.ndarray]
    fused: np.ndarray


def resolve_dataset(cfg: ExperimentConfig) -> tuple[MultiViewDataset, float]:
    if cfg.manifest is not None:
        data, manifest_eta = load_manifest(cfg.manifest)
        eta = cfg.eta if cfg.eta is not None else manifest_eta
    else:
        data = generate_synthetic(cfg.synthetic)
        eta = cfg.eta if cfg.eta is not None else 0.5
    return data, float(eta)


def _score(labels: np.ndarray | None, fused: np.ndarray) -> dict | None:
    if labels is None:
        return None
    return {
        "acc": acc(labels, fused),
        "nmi": nmi(labels, fused),
        "ari": ari(labels, fused),
    }


def _zero_pad_bank(bank, mask: MaskMatrix):
    out = bank.copy()
    for v in range(out.n_views):
        rows = mask.missing_rows(v)
        out.Z[v][rows] = 0.0
        out.status[rows, v] = LatentStatus.ZERO_PADDED
    return out


def execute(cfg: ExperimentConfig) -> tuple[RunRecord, PipelineState]:
    """Run the staged pipeline once and return the record plus live artifacts."""
    data, eta = resolve_dataset(cfg)
    mask = generate_mask(data.n, data.n_views, eta, seed=cfg.seed)
    curves: dict = {}
    wall: dict = {}
    hashes: dict = {}

    # stage 1: per-view autoencoders on observed rows
    t0 = time.perf_counter()
    aes = [
        ViewAutoencoder.build(d_v, cfg.d_latent, list(cfg.ae_hidden), stream(cfg.seed, "init", "ae", v))
        for v, d_v in enumerate(data.view_dims())
    ]
    curves["stage1"] = train_stage1(aes, data, mask, cfg.stage1, seed=cfg.seed)
    wall["stage1"] = time.perf_counter() - t0
    for v, ae in enumerate(aes):
        hashes[f"ae{v}/after_stage1"] = ae.store.state_hash()

    bank = encode_observed(aes, data, mask)
    final_rec = reconstruction_loss(aes, data, mask).item()

    # stage 2: conditional denoisers on complete rows, then imputation
    sched = None
    nets = None
    final_dm = None
    t0 = time.perf_counter()
    if cfg.imputation == "diffusion":
        sched = build_schedule(cfg.diffusion)
        nets = {
            v: DenoiserNet(cfg.d_latent, cfg.diffusion, f"to_view{v}", stream(cfg.seed, "init", "dm", v))
            for v in range(2)
        }
        dm_curves = train_stage2(nets, bank, mask, sched, cfg.stage2, seed=cfg.seed)
        for v in range(2):
            curves[f"stage2_view{v}"] = dm_curves[v]
        bank = impute_missing(nets, bank, mask, sched, seed=cfg.seed)
        final_dm = _final_diffusion_loss(nets, bank, mask, sched, cfg.seed)
    elif cfg.imputation == "zero_padding":
        bank = _zero_pad_bank(bank, mask)
    elif bank.has_absent():
        raise StageError("stage-2", "imputation mode 'none' left absent latents")
    wall["stage2"] = time.perf_counter() - t0
    for v, ae in enumerate(aes):
        hashes[f"ae{v}/after_stage2"] = ae.store.state_hash()
    if nets is not None:
        for v, net in nets.items():
            hashes[f"dm{v}/after_stage2"] = net.store.state_hash()

    # stage 3: contrastive cluster heads on the completed bank
    t0 = time.perf_counter()
    head_cfg = HeadConfig(k=cfg.k, d_mid=cfg.d_mid, d_feature=cfg.d_feature, tau=cfg.tau)
    heads = ClusterHeads(cfg.d_latent, head_cfg, n_views=2, seed_rng=stream(cfg.seed, "init", "heads"))
    curves["stage3"] = train_stage3(heads, bank, cfg.stage3, seed=cfg.seed, tau=cfg.tau)
    wall["stage3"] = time.perf_counter() - t0
    for v, ae in enumerate(aes):
        hashes[f"ae{v}/after_stage3"] = ae.store.state_hash()
    if nets is not None:
        for v, net in nets.items():
            hashes[f"dm{v}/after_stage3"] = net.store.state_hash()
    hashes["heads/after_stage3"] = heads.store.state_hash()

    H1, Y1 = heads.forward_t(bank.Z[0], view=0)
    H2, Y2 = heads.forward_t(bank.Z[1], view=1)
    final_clu = clustering_loss(H1, H2, Y1, Y2, tau=cfg.tau).item()
    fused = predict(Y1.data, Y2.data)

    final_losses = {
        "reconstruction": final_rec,
        "diffusion": final_dm,
        "clustering": final_clu,
        # Algorithm is staged; this total is bookkeeping over stage-final values
        "total": final_rec + (final_dm or 0.0) + final_clu,
    }
    record = RunRecord(
        config=cfg.to_dict(),
        metrics=_score(data.labels, fused),
        final_losses=final_losses,
        curves=curves,
        stage_hashes=hashes,
        wall_clock=wall,
        checkpoints={},
        n_samples=data.n,
        eta=eta,
    )
    state = PipelineState(
        data=data, mask=mask, aes=aes, bank=bank, sched=sched, nets=nets,
        heads=heads, assignments=[Y1.data, Y2.data], fused=fused,
    )
    if cfg.out_dir is not None:
        _write_outputs(cfg, record, state)
    return record, state


def _final_diffusion_loss(nets, bank, mask, sched, seed) -> float:
    complete = mask.complete_rows()
    total = 0.0
    for v, net in nets.items():
        rng = stream(seed, "eval", "dm", v)
        t = rng.integers(1, sched.T + 1, size=complete.size)
        eps = rng.standard_normal((complete.size, net.d_latent))
        total += diffusion_loss_frozen(
            net, bank.Z[v][complete], bank.Z[1 - v][complete], t, eps, sched
        ).item()
    return total / len(nets)


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    return execute(cfg)[0]


# ---- output files ------------------------------------------------------------


def _write_outputs(cfg: ExperimentConfig, record: RunRecord, state: PipelineState) -> None:
    out = resolve_out_dir(cfg.out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    for v, ae in enumerate(state.aes):
        save_checkpoint(ckpt_dir / f"ae{v}.ckpt", ae.store)
        record.checkpoints[f"ae{v}"] = str(ckpt_dir / f"ae{v}.ckpt")
    if state.nets is not None:
        for v, net in state.nets.items():
            save_checkpoint(ckpt_dir / f"dm{v}.ckpt", net.store)
            record.checkpoints[f"dm{v}"] = str(ckpt_dir / f"dm{v}.ckpt")
        (out / "schedule.json").write_text(
            json.dumps({"timesteps": state.sched.T, "betas": state.sched.betas.tolist()}) + "\n"
        )
    save_checkpoint(ckpt_dir / "heads.ckpt", state.heads.store)
    record.checkpoints["heads"] = str(ckpt_dir / "heads.ckpt")

    for name, curve in record.curves.items():
        path = out / "curves" / f"{name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(curve)]
        path.write_text("\n".join(lines) + "\n")

    np.savetxt(out / "labels_pred.txt", state.fused, fmt="%d")
    for v, Y in enumerate(state.assignments):
        save_matrix(out / f"assignments_view{v}.mat", Y)

    H = np.hstack([state.heads.forward(state.bank.Z[v], v)[0] for v in range(2)])
    coords, ratios = export_projection(H)
    color = state.data.labels if state.data.labels is not None else state.fused
    write_projection_csv(out / "projection.csv", coords, color, ratios)

    record.save(out / "record.json")


def resolve_out_dir(out_dir: str) -> Path:
    """Relative output paths live under $DIFFMVC_OUT_ROOT when it is set."""
    path = Path(out_dir)
    root = os.environ.get("DIFFMVC_OUT_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


# ---- evaluation from checkpoints ------------------------------------------------


def evaluate_run(run_dir) -> dict:
    """Recompute metrics from a run directory's config and checkpoints.

    Deterministic seeding makes this bit-identical to the in-process result.
    """
    run_dir = resolve_out_dir(str(run_dir))
    record = RunRecord.load(run_dir / "record.json")
    cfg = ExperimentConfig.from_dict({**record.config, "out_dir": None})
    data, eta = resolve_dataset(cfg)
    mask = generate_mask(data.n, data.n_views, eta, seed=cfg.seed)

    aes = [
        ViewAutoencoder.build(d_v, cfg.d_latent, list(cfg.ae_hidden), stream(cfg.seed, "init", "ae", v))
        for v, d_v in enumerate(data.view_dims())
    ]
    for v, ae in enumerate(aes):
        restore_into(run_dir / "checkpoints" / f"ae{v}.ckpt", ae.store)
    bank = encode_observed(aes, data, mask)

    if cfg.imputation == "diffusion":
        sched_doc = json.loads((run_dir / "schedule.json").read_text())
        sched = NoiseSchedule(betas=np.array(sched_doc["betas"]))
        nets = {}
        for v in range(2):
            net = DenoiserNet(cfg.d_latent, cfg.diffusion, f"to_view{v}", stream(cfg.seed, "init", "dm", v))
            restore_into(run_dir / "checkpoints" / f"dm{v}.ckpt", net.store)
            net.trained = True
            nets[v] = net
        bank = impute_missing(nets, bank, mask, sched, seed=cfg.seed)
    elif cfg.imputation == "zero_padding":
        bank = _zero_pad_bank(bank, mask)

    head_cfg = HeadConfig(k=cfg.k, d_mid=cfg.d_mid, d_feature=cfg.d_feature, tau=cfg.tau)
    heads = ClusterHeads(cfg.d_latent, head_cfg, n_views=2, seed_rng=stream(cfg.seed, "init", "heads"))
    restore_into(run_dir / "checkpoints" / "heads.ckpt", heads.store)

    Y1 = heads.forward(bank.Z[0], 0)[1]
    Y2 = heads.forward(bank.Z[1], 1)[1]
    fused = predict(Y1, Y2)
    metrics = _score(data.labels, fused)
    return {"metrics": metrics, "fused": fused.tolist()}


# ---- sweeps and ablations ---------------------------------------------------------


def sweep_missing_rate(cfg: ExperimentConfig, etas: list[float]) -> list[RunRecord]:
    """One independent seeded run per missing rate; failures are recorded and
    do not abort the remaining runs."""
    records = []
    for eta in etas:
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"eta {eta} outside [0, 1]")
        sub_seed = substream_seed(cfg.seed, "sweep", f"{eta:.4f}")
        sub_out = None if cfg.out_dir is None else str(Path(cfg.out_dir) / f"eta_{eta:.2f}")
        sub = replace(cfg, eta=eta, seed=sub_seed, out_dir=sub_out)
        try:
            records.append(run_experiment(sub))
        except Exception as e:  # noqa: BLE001 - per-run isolation is the contract
            records.append(
                RunRecord(
                    config=sub.to_dict(), metrics=None, final_losses={}, curves={},
                    stage_hashes={}, wall_clock={}, checkpoints={}, n_samples=0,
                    eta=eta, error=str(e),
                )
            )
    if cfg.out_dir is not None:
        out = resolve_out_dir(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["eta,acc,nmi,ari,error"]
        for rec in records:
            m = rec.metrics or {}
            lines.append(
                f"{rec.eta},{m.get('acc', '')},{m.get('nmi', '')},{m.get('ari', '')},{rec.error or ''}"
            )
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    return records


ABLATION_VARIANTS = ("rec", "rec_dm", "rec_clu", "full")


def ablate(cfg: ExperimentConfig) -> dict[str, RunRecord]:
    """Four cumulative variants of the pipeline on one shared dataset/mask:

    rec      stage 1 only, k-means on zero-padded concatenated latents
    rec_dm   stages 1-2, k-means on the diffusion-completed latents
    rec_clu  stages 1+3 with zero-padding in place of imputation
    full     the whole pipeline
    """
    data, eta = resolve_dataset(cfg)
    mask = generate_mask(data.n, data.n_views, eta, seed=cfg.seed)
    records: dict[str, RunRecord] = {}

    aes = [
        ViewAutoencoder.build(d_v, cfg.d_latent, list(cfg.ae_hidden), stream(cfg.seed, "init", "ae", v))
        for v, d_v in enumerate(data.view_dims())
    ]
    stage1_curve = train_stage1(aes, data, mask, cfg.stage1, seed=cfg.seed)
    bank0 = encode_observed(aes, data, mask)

    def kmeans_record(variant: str, bank, extra_curves: dict) -> RunRecord:
        feats = bank.concatenated()
        labels, _ = kmeans_best_of(feats, cfg.k, seed=substream_seed(cfg.seed, "ablate", variant))
        return RunRecord(
            config=cfg.to_dict(),
            metrics=_score(data.labels, labels),
            final_losses={}, curves={"stage1": stage1_curve, **extra_curves},
            stage_hashes={}, wall_clock={}, checkpoints={}, n_samples=data.n,
            eta=eta, variant=variant,
        )

    # (a) reconstruction only: zero-padded latents, k-means scoring
    records["rec"] = kmeans_record("rec", _zero_pad_bank(bank0, mask), {})

    # (b) + diffusion completion: k-means on imputed latents
    sched = build_schedule(cfg.diffusion)
    nets = {
        v: DenoiserNet(cfg.d_latent, cfg.diffusion, f"to_view{v}", stream(cfg.seed, "init", "dm", v))
        for v in range(2)
    }
    dm_curves = train_stage2(nets, bank0, mask, sched, cfg.stage2, seed=cfg.seed)
    bank_dm = impute_missing(nets, bank0, mask, sched, seed=cfg.seed)
    records["rec_dm"] = kmeans_record(
        "rec_dm", bank_dm, {f"stage2_view{v}": dm_curves[v] for v in range(2)}
    )

    # (c) + clustering heads over zero-padded latents (no imputation)
    def heads_record(variant: str, bank, extra_curves: dict) -> RunRecord:
        head_cfg = HeadConfig(k=cfg.k, d_mid=cfg.d_mid, d_feature=cfg.d_feature, tau=cfg.tau)
        heads = ClusterHeads(cfg.d_latent, head_cfg, 2, seed_rng=stream(cfg.seed, "init", "heads"))
        curve = train_stage3(heads, bank, cfg.stage3, seed=cfg.seed, tau=cfg.tau)
        fused = predict(*heads.assignments(bank))
        return RunRecord(
            config=cfg.to_dict(),
            metrics=_score(data.labels, fused),
            final_losses={}, curves={"stage1": stage1_curve, **extra_curves, "stage3": curve},
            stage_hashes={}, wall_clock={}, checkpoints={}, n_samples=data.n,
            eta=eta, variant=variant,
        )

    records["rec_clu"] = heads_record("rec_clu", _zero_pad_bank(bank0, mask), {})
    records["full"] = heads_record(
        "full", bank_dm, {f"stage2_view{v}": dm_curves[v] for v in range(2)}
    )

    if cfg.out_dir is not None:
        out = resolve_out_dir(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["variant,acc,nmi,ari"]
        for variant in ABLATION_VARIANTS:
            m = records[variant].metrics or {}
            lines.append(f"{variant},{m.get('acc', '')},{m.get('nmi', '')},{m.get('ari', '')}")
        (out / "ablation.csv").write_text("\n".join(lines) + "\n")
        for variant, rec in records.items():
            rec.save(out / f"record_{variant}.json")
    return records


# ---- 2-D projection export ----------------------------------------------------------


def export_projection(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Top-2 principal-component coordinates and explained-variance ratios.

    Zero-variance input yields zero coordinates and zero ratios.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("projection needs at least two rows")
    centered = X - X.mean(axis=0)
    total = (centered**2).sum()
    if total == 0.0:
        return np.zeros((X.shape[0], 2)), np.zeros(2)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    coords = centered @ comps.T
    ratios = (s[:2] ** 2) / total
    if coords.shape[1] < 2:  # rank-1 data: pad the second axis with zeros
        coords = np.hstack([coords, np.zeros((X.shape[0], 1))])
        ratios = np.append(ratios, 0.0)
    return coords, ratios


def write_projection_csv(path, coords: np.ndarray, labels: np.ndarray | None, ratios: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# explained_variance_ratio,{ratios[0]!r},{ratios[1]!r}", "x,y,label"]
    lab = labels if labels is not None else np.full(coords.shape[0], -1)
    for (x, y), c in zip(coords, lab):
        lines.append(f"{x!r},{y!r},{int(c)}")
    path.write_text("\n".join(lines) + "\n")
