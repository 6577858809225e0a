"""The training loop: data, local training, attacks, aggregation and
metrics for one experiment."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .. import adversary as adv
from .. import rngs
from ..config import ExperimentConfig, to_dict
from ..discriminator import DiscriminatorPoly, from_config
from ..field import Modulus, min_modulus
from ..protocol import Encoded, Session, build_session, step1_encode
from ..quant import embed
from . import aggregators as ag
from .data import Dataset, load_mnist, partition, split_root, standardize, synthetic_mixture
from .models import Model, local_train

METRIC_FIELDS = (
    "iteration",
    "accuracy",
    "loss",
    "asr",
    "active",
    "excluded",
    "aborted",
    "bytes_client",
    "bytes_federator",
    "update_norm",
    "agg_digest",
)


@dataclass
class Environment:
    train: Dataset
    test: Dataset
    root: Dataset
    clients: list[Dataset]
    model: Model


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    ds = cfg.dataset
    if ds.name == "mnist":
        train, test = load_mnist(ds.data_dir, ds.n_train, ds.n_test, ds.pool, cfg.seed)
    else:
        train, test = synthetic_mixture(ds.n_train, ds.n_test, ds.dim, ds.num_classes, ds.sep, cfg.seed)
    if ds.standardize:
        train, test = standardize(train, test)
    return train, test


def build_environment(cfg: ExperimentConfig) -> Environment:
    train, test = load_data(cfg)
    rng = rngs.stream(cfg.seed, "partition")
    root, rest = split_root(train, cfg.root_size, rng)
    clients = partition(rest, cfg.n, cfg.gamma, rng)
    hidden = (cfg.hidden,) if cfg.arch == "mlp" else ()
    model = Model(train.dim, train.num_classes, hidden)
    return Environment(train, test, root, clients, model)


@dataclass
class TrainingResult:
    config: ExperimentConfig
    rows: list[dict]
    w: np.ndarray
    excluded: dict[int, tuple[int, str]] = field(default_factory=dict)
    transcripts: list = field(default_factory=list)

    def summary(self) -> dict:
        evaluated = [r for r in self.rows if r["accuracy"] is not None]
        last = evaluated[-1] if evaluated else {}
        return {
            "run_id": self.config.run_id(),
            "aggregator": self.config.aggregator,
            "attack": self.config.attack.kind,
            "seed": self.config.seed,
            "iterations": len(self.rows),
            "final_accuracy": last.get("accuracy"),
            "final_loss": last.get("loss"),
            "final_asr": last.get("asr"),
            "aborted_rounds": sum(1 for r in self.rows if r["aborted"]),
            "excluded": {str(i): {"iteration": g, "reason": why} for i, (g, why) in sorted(self.excluded.items())},
            "bytes_client_total": sum(r["bytes_client"] or 0 for r in self.rows),
            "bytes_federator_total": sum(r["bytes_federator"] or 0 for r in self.rows),
            "d": int(self.w.size),
            "config": to_dict(self.config),
        }

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir) / self.config.run_id()
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
            wr.writeheader()
            for row in self.rows:
                wr.writerow({k: "" if row[k] is None else row[k] for k in METRIC_FIELDS})
        with open(out / "summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=1, sort_keys=True)
        for tr in self.transcripts:
            tr.write(out / "transcripts")
        return out


def digest_fractions(fractions: list[Fraction] | None) -> str:
    if fractions is None:
        return "none"
    text = ";".join(f"{f.numerator}/{f.denominator}" for f in fractions)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class _FixedPoint:
    """Plaintext shadow of the secure rounds: same quantization streams,
    same norm check with permanent exclusion, exact rational aggregate."""

    def __init__(self, cfg: ExperimentConfig, h: DiscriminatorPoly, d: int, modulus: Modulus):
        self.cfg, self.h, self.d, self.modulus = cfg, h, d, modulus
        self.excluded: dict[int, tuple[int, str]] = {}

    def participants(self) -> list[int]:
        return [i for i in range(1, self.cfg.n + 1) if i not in self.excluded]

    def encode(self, g: int, i: int, update: np.ndarray) -> Encoded:
        return step1_encode(update, self.cfg.q, self.modulus, rngs.stream(self.cfg.seed, "quant", g, i))

    def round(self, g: int, encoded: dict[int, Encoded], root: Encoded):
        q2 = self.cfg.q**2
        active = []
        for i in sorted(encoded):
            ints = encoded[i].ints
            if abs(int(sum(int(x) * int(x) for x in ints)) - q2) < self.cfg.eps * q2:
                active.append(i)
            else:
                self.excluded[i] = (g, "norm")
        if not active:
            return None, active
        return ag.fltrust_poly_fixedpoint_oracle(root.ints, [encoded[i].ints for i in active], self.h, self.cfg.q), active


def _norm_skip(enc: Encoded, modulus: Modulus) -> Encoded:
    ints = adv.skip_normalization(enc.ints)
    return Encoded(embed(ints, modulus), ints, enc.norm)


def run_training(cfg: ExperimentConfig, env: Environment | None = None, *, keep_transcripts: bool | None = None) -> TrainingResult:
    cfg.validate()
    env = env or build_environment(cfg)
    model = env.model
    d = model.dim
    h = from_config(cfg.h_coeffs, cfg.coeff_scale)
    spec = cfg.adversary()
    byz = set(spec.byzantine)
    keep = cfg.transcripts if keep_transcripts is None else keep_transcripts

    # Byzantine training data
    data = list(env.clients)
    L = env.train.num_classes
    for i in byz:
        if spec.attack == "label_flip":
            data[i - 1] = adv.label_flip(data[i - 1], L)
        elif spec.attack == "scaling":
            data[i - 1] = adv.backdoor_dataset(data[i - 1], cfg.attack.target, cfg.attack.trigger_size)

    session: Session | None = None
    shadow: _FixedPoint | None = None
    if cfg.aggregator == "lobyitfl_secure":
        session = build_session(cfg.n, cfg.t, d, cfg.q, cfg.eps, h, cfg.iterations, cfg.seed)
    elif cfg.aggregator == "fltrust_poly_fixedpoint":
        shadow = _FixedPoint(cfg, h, d, min_modulus(cfg.n, d, h.k, cfg.q, h.coeff_scale, h.coeff_mass))
    tamper = None
    if spec.attack == "corrupt" and session is not None:
        tamper = adv.corruption_hook(sorted(byz), cfg.attack.mode, rngs.stream(cfg.seed, "corrupt"), session.params.modulus.p)

    w = model.init(rngs.stream(cfg.seed, "init"))
    rows: list[dict] = []
    transcripts = []
    for g in range(cfg.iterations):
        if session is not None:
            participants = session.participants()
        elif shadow is not None:
            participants = shadow.participants()
        else:
            participants = list(range(1, cfg.n + 1))

        updates = {
            i: local_train(
                model, w, data[i - 1].X, data[i - 1].y, cfg.eta_local, rngs.stream(cfg.seed, "local", g, i),
                cfg.local_iters, cfg.batch,
            )
            for i in participants
        }
        u0 = local_train(
            model, w, env.root.X, env.root.y, cfg.eta_local, rngs.stream(cfg.seed, "root", g), cfg.local_iters, cfg.batch
        )
        updates = _apply_update_attack(cfg, spec, updates, u0, h, g)

        row = {k: None for k in METRIC_FIELDS}
        row.update(iteration=g, aborted="", excluded="")
        u = np.zeros(d)
        if session is not None:
            encoded = None
            if spec.attack == "norm_skip":
                encoded = {
                    i: _norm_skip(step1_encode(updates[i], cfg.q, session.params.modulus, rngs.stream(session.seed, "quant", g, i)), session.params.modulus)
                    for i in participants
                    if i in byz
                }
            res = session.run_round(
                g, w, updates, u0, encoded=encoded, dropouts=spec.dropouts_at(g), tamper=tamper
            )
            tr = res.transcript
            row["bytes_federator"] = tr.bytes_of(0)
            row["bytes_client"] = round(np.mean([tr.bytes_of(i) for i in range(1, cfg.n + 1)]), 1)
            row["active"] = len(res.active)
            row["aborted"] = res.aborted or ""
            row["agg_digest"] = digest_fractions(res.fractions)
            if res.ok:
                u = res.aggregate
            if keep:
                transcripts.append(tr)
        elif shadow is not None:
            root = step1_encode(u0, cfg.q, shadow.modulus, rngs.stream(cfg.seed, "quant", g, 0))
            enc = {i: shadow.encode(g, i, updates[i]) for i in participants}
            if spec.attack == "norm_skip":
                for i in byz & set(enc):
                    enc[i] = _norm_skip(enc[i], shadow.modulus)
            fractions, active = shadow.round(g, enc, root)
            row["active"] = len(active)
            row["agg_digest"] = digest_fractions(fractions)
            if fractions is None:
                row["aborted"] = "no active clients" if not active else "zero denominator"
            else:
                u = ag.oracle_update(fractions, root.norm, cfg.q, d)
        else:
            u = _plain_aggregate(cfg, [updates[i] for i in participants], u0, h)
            row["active"] = len(participants)
        excluded = session.federator.excluded if session is not None else shadow.excluded if shadow is not None else {}
        row["excluded"] = " ".join(str(i) for i in sorted(excluded))
        row["update_norm"] = float(np.linalg.norm(u))
        w = w + cfg.eta * u

        if (g + 1) % cfg.eval_every == 0 or g == cfg.iterations - 1:
            row["accuracy"] = round(model.accuracy(w, env.test.X, env.test.y), 6)
            row["loss"] = round(float(model.loss(w, env.test.X, env.test.y)), 6)
            if spec.attack == "scaling":
                row["asr"] = round(
                    adv.attack_success_rate(lambda X: model.predict(w, X), env.test, cfg.attack.target, cfg.attack.trigger_size), 6
                )
        rows.append(row)
    excluded = session.federator.excluded if session is not None else shadow.excluded if shadow is not None else {}
    return TrainingResult(cfg, rows, w, dict(excluded), transcripts)


def _apply_update_attack(cfg, spec, updates: dict, u0: np.ndarray, h: DiscriminatorPoly, g: int) -> dict:
    byz = [i for i in sorted(updates) if i in set(spec.byzantine)]
    if not byz or spec.attack in ("none", "label_flip", "norm_skip", "corrupt"):
        return updates
    honest_ids = [i for i in sorted(updates) if i not in byz]
    own = [updates[i] for i in byz]
    others = [updates[i] for i in honest_ids]
    if spec.attack == "scaling":
        factor = cfg.attack.factor if cfg.attack.factor is not None else float(cfg.n)
        new = [adv.scaling_attack(u, factor) for u in own]
    elif spec.attack == "directed":
        new = adv.directed_attack(own, u0, h, len(byz), others, grid=cfg.attack.grid)
    elif spec.attack == "krum_attack":
        new = adv.fang_krum_attack(own + others, len(byz), len(byz))
    elif spec.attack == "trim_attack":
        new = adv.fang_trim_attack(own + others, len(byz), rngs.stream(cfg.seed, "trim", g))
    else:
        raise ValueError(f"unknown attack {spec.attack!r}")
    out = dict(updates)
    out.update(zip(byz, new))
    return out


def _plain_aggregate(cfg: ExperimentConfig, updates: list[np.ndarray], u0: np.ndarray, h: DiscriminatorPoly) -> np.ndarray:
    name = cfg.aggregator
    if name == "fedavg":
        return ag.fedavg(updates)
    if name == "fltrust_relu":
        return ag.fltrust_relu(updates, u0)
    if name == "fltrust_poly_real":
        return ag.fltrust_poly_real(updates, u0, h)
    if name == "krum":
        return ag.krum(updates, cfg.e)
    if name == "trimmed_mean":
        return ag.trimmed_mean(updates, max(cfg.e, 1))
    raise ValueError(f"unknown aggregator {name!r}")
