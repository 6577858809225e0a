"""Byzantine behaviour at the learning layer (poisoned data and updates) and
at the protocol layer (tampered shares, skipped normalization), plus dropout
schedules.

Attacks receive an :class:`AttackView`, which carries what the threat model
grants a Byzantine client: every client's data, the current model and the
public discriminator.  Shares and MAC keys are never part of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .discriminator import DiscriminatorPoly, eval_real
from .flsim.aggregators import cosines, fltrust_poly_real, krum, trimmed_mean
from .flsim.data import Dataset
from .field import Modulus
from .mac import TaggedArray
from .rngs import FieldSampler
from .wire import Message

ATTACKS = ("none", "label_flip", "scaling", "directed", "krum_attack", "trim_attack", "norm_skip", "corrupt")
CORRUPTION_MODES = ("value", "tag", "both", "opening")


class AdversaryConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AdversarySpec:
    byzantine: tuple[int, ...] = ()
    colluders: tuple[int, ...] = ()
    dropouts: tuple[tuple[int, int, int], ...] = ()  # (client, iteration, step)
    attack: str = "none"
    params: dict = field(default_factory=dict)

    def validate(self, n: int, t: int, s: int) -> None:
        if self.attack not in ATTACKS:
            raise AdversaryConfigError(f"attack: unknown variant {self.attack!r}")
        e = len(self.byzantine)
        if n < e + t + s + 1:
            raise AdversaryConfigError(f"n: need n >= e+t+s+1, got n={n}, e={e}, t={t}, s={s}")
        for name, ids in (("byzantine", self.byzantine), ("colluders", self.colluders)):
            if any(not 1 <= i <= n for i in ids):
                raise AdversaryConfigError(f"{name}: ids must be in 1..{n}")
        if len(self.colluders) > t:
            raise AdversaryConfigError(f"colluders: at most t={t} allowed")
        per_iter: dict[int, set[int]] = {}
        for i, g, step in self.dropouts:
            if not 1 <= i <= n or step not in (2, 3, 4, 5):
                raise AdversaryConfigError("dropouts: entries are (client 1..n, iteration, step 2..5)")
            per_iter.setdefault(g, set()).add(i)
        if any(len(v) > s for v in per_iter.values()):
            raise AdversaryConfigError(f"dropouts: more than s={s} clients drop in one iteration")

    def dropouts_at(self, g: int) -> list[tuple[int, int]]:
        return [(i, step) for i, gg, step in self.dropouts if gg == g]


@dataclass
class AttackView:
    """What a Byzantine client may read."""

    datasets: Sequence[Dataset]
    w: np.ndarray
    h: DiscriminatorPoly
    u0_estimate: np.ndarray | None = None


# ---------------------------------------------------------------------------
# data poisoning
# ---------------------------------------------------------------------------


def flip_labels(y: np.ndarray, num_classes: int) -> np.ndarray:
    return num_classes - 1 - np.asarray(y)


def label_flip(ds: Dataset, num_classes: int | None = None) -> Dataset:
    return ds.with_labels(flip_labels(ds.y, num_classes or ds.num_classes))


def stamp_trigger(ds: Dataset, size: int = 3, value: float | None = None) -> Dataset:
    """White ``size`` x ``size`` patch in the bottom-right corner.  For
    feature-only data the last ``size`` features are set high instead."""
    if ds.images is not None:
        imgs = ds.images.copy()
        imgs[:, -size:, -size:] = 1.0 if value is None else value
        return ds.with_images(imgs)
    X = ds.X.copy()
    X[:, -size:] = 3.0 if value is None else value
    return replace(ds, X=X)


def backdoor_dataset(ds: Dataset, target: int = 0, size: int = 3) -> Dataset:
    """Clean samples plus trigger-stamped copies relabeled to ``target``."""
    trig = stamp_trigger(ds, size).with_labels(np.full(len(ds), target))
    imgs = None if ds.images is None else np.concatenate([ds.images, trig.images])
    return replace(ds, X=np.concatenate([ds.X, trig.X]), y=np.concatenate([ds.y, trig.y]), images=imgs)


def attack_success_rate(predict, test: Dataset, target: int = 0, size: int = 3) -> float:
    """Fraction of triggered test samples (true label != target) classified
    as the target."""
    keep = test.y != target
    if not keep.any():
        return float("nan")
    trig = stamp_trigger(test.subset(np.flatnonzero(keep)), size)
    return float(np.mean(predict(trig.X) == target))


def scaling_attack(update: np.ndarray, factor: float) -> np.ndarray:
    return factor * np.asarray(update, dtype=float)


# ---------------------------------------------------------------------------
# update-level attacks
# ---------------------------------------------------------------------------


def directed_attack(
    honest: Sequence[np.ndarray],
    u0: np.ndarray,
    h: DiscriminatorPoly,
    count: int,
    others: Sequence[np.ndarray] = (),
    grid: int = 91,
    min_trust: float = 0.0,
) -> list[np.ndarray]:
    """Adaptive attack against trust-score aggregation with discriminator h.

    The malicious update lies in the plane spanned by the root update and the
    part of the benign mean orthogonal to it, rotated away from the benign
    mean.  The angle is chosen by grid search to minimize the progress of the
    resulting aggregate along the benign mean, among angles whose trust
    score stays above ``min_trust``.  Unit norm keeps it inside the norm check.
    """
    benign = list(honest) + list(others)
    mean = np.mean(benign, axis=0)
    u0_dir = u0 / (np.linalg.norm(u0) or 1.0)
    ref = mean / (np.linalg.norm(mean) or 1.0)
    perp = -(ref - (ref @ u0_dir) * u0_dir)
    if np.linalg.norm(perp) < 1e-12:
        perp = np.zeros_like(u0_dir)
        perp[np.argmin(np.abs(u0_dir))] = 1.0
        perp -= (perp @ u0_dir) * u0_dir
    perp /= np.linalg.norm(perp)
    best, best_score = u0_dir, np.inf
    for theta in np.linspace(0.0, np.pi, grid):
        cand = np.cos(theta) * u0_dir + np.sin(theta) * perp
        if eval_real(h, float(cand @ u0_dir)) <= min_trust:
            continue
        agg = fltrust_poly_real(benign + [cand] * count, u0, h)
        score = float(agg @ ref)
        if score < best_score:
            best, best_score = cand, score
    scale = np.mean([np.linalg.norm(u) for u in honest]) if len(honest) else 1.0
    return [best * scale for _ in range(count)]


def fang_trim_attack(benign: Sequence[np.ndarray], count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Full-knowledge attack on coordinate-wise trimmed mean: push every
    coordinate past the benign extreme opposite to the benign direction."""
    B = np.asarray(benign, dtype=float)
    direction = np.sign(B.sum(axis=0))
    hi, lo = B.max(axis=0), B.min(axis=0)
    directed = np.where(direction > 0, lo, hi)
    out = []
    for _ in range(count):
        r = 1.0 + rng.random(B.shape[1])
        same = direction * directed > 0
        out.append(np.where(same, directed / r, directed * r))
    return out


def fang_krum_attack(benign: Sequence[np.ndarray], count: int, f: int, steps: int = 20) -> list[np.ndarray]:
    """Full-knowledge attack on Krum: the largest ``lam`` (halving search)
    for which Krum picks ``-lam * sign(mean benign)``."""
    B = np.asarray(benign, dtype=float)
    direction = np.sign(B.mean(axis=0))
    lam = 2.0 * float(np.abs(B).max() or 1.0)
    mal = -lam * direction
    for _ in range(steps):
        mal = -lam * direction
        chosen = krum(list(B) + [mal] * count, f)
        if np.allclose(chosen, mal):
            break
        lam /= 2.0
    return [mal.copy() for _ in range(count)]


# ---------------------------------------------------------------------------
# protocol-layer attacks
# ---------------------------------------------------------------------------


def _tagged_items(payload: dict):
    for key, val in payload.items():
        if isinstance(val, TaggedArray):
            yield payload, key, val
        elif isinstance(val, dict):
            yield from _tagged_items(val)


def protocol_corruption(msg: Message, mode: str, rng: np.random.Generator, p: int) -> dict:
    """Copy of ``msg.payload`` with one tagged entry perturbed.

    ``value`` shifts a share, ``tag`` shifts its tag, ``both`` shifts the
    share and adds a random guess to the tag (passes only if the guess equals
    ``alpha`` times the shift), ``opening`` shifts a share of an opening.
    """
    if mode not in CORRUPTION_MODES:
        raise ValueError(f"unknown corruption mode {mode!r}")
    payload = _copy_payload(msg.payload)
    items = list(_tagged_items(payload))
    if not items:
        return payload
    if mode == "opening" and msg.kind != "OpeningShare":
        return payload
    container, key, ta = items[int(rng.integers(len(items)))]
    vals = np.array(ta.values, dtype=object, copy=True)
    tags = np.array(ta.tags, dtype=object, copy=True)
    flat_v, flat_t = vals.reshape(-1), tags.reshape(-1)
    pos = int(rng.integers(max(flat_v.size, 1)))
    sampler = FieldSampler(rng)
    delta = sampler.nonzero(Modulus(p))
    if mode in ("value", "opening"):
        flat_v[pos] = (flat_v[pos] + delta) % p
    elif mode == "tag":
        flat_t[pos] = (flat_t[pos] + delta) % p
    else:
        guess = int(sampler.uniform(Modulus(p), 1)[0])
        flat_v[pos] = (flat_v[pos] + delta) % p
        flat_t[pos] = (flat_t[pos] + guess) % p
    container[key] = TaggedArray(vals if vals.ndim else vals[()], tags if tags.ndim else tags[()], ta.p)
    return payload


def _copy_payload(obj):
    if isinstance(obj, dict):
        return {k: _copy_payload(v) for k, v in obj.items()}
    return obj


def corruption_hook(byzantine: Sequence[int], mode: str, rng: np.random.Generator, p: int, kinds=None):
    """Tamper hook for :meth:`Session.run_round`: Byzantine senders corrupt
    every message of the selected kinds."""
    byz = set(byzantine)

    def hook(msg: Message) -> dict:
        if msg.sender in byz and (kinds is None or msg.kind in kinds):
            return protocol_corruption(msg, mode, rng, p)
        return msg.payload

    return hook


def skip_normalization(encoded_ints: np.ndarray, factor: int = 2) -> np.ndarray:
    """Encoder attack: submit a scaled quantized update (norm^2 about
    ``factor^2 * q^2``), which the norm check must reject."""
    return factor * np.asarray(encoded_ints, dtype=np.int64)


def trust_scores(updates: Sequence[np.ndarray], u0: np.ndarray, h: DiscriminatorPoly) -> np.ndarray:
    return np.asarray(eval_real(h, cosines(updates, u0)))


__all__ = [
    "AdversarySpec",
    "AttackView",
    "attack_success_rate",
    "backdoor_dataset",
    "corruption_hook",
    "directed_attack",
    "fang_krum_attack",
    "fang_trim_attack",
    "flip_labels",
    "label_flip",
    "protocol_corruption",
    "scaling_attack",
    "skip_normalization",
    "stamp_trigger",
    "trimmed_mean",
    "trust_scores",
]
