"""Bi-encoder: a text-only question encoder and a text+location POI encoder.

Text modules project hashed n-gram features through a trainable dense layer.
The POI location module mean-pools token embeddings of the multi-granularity
name (entity, street, city, postcode) and feeds them through a dense stack.
Scores are inner products between question and POI vectors.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import DigestLimits, Poi, PoiCollection, PoiName, Question, ReviewDigest, poi_text
from .errors import ConfigError, ShapeError
from .nn import (DenseLayer, EmbeddingTable, Parameter, checkpoint_bytes, dense_apply,
                 embed_mean_batch, parse_checkpoint)
from .text import FeatureConfig, analyze, feature_matrix, hash_features

MARKERS = ("<ENT>", "<STR>", "<CITY>", "<PC>")
_FIELD_MARKER = {"entity": 0, "street": 1, "city": 2, "postcode": 3}
LOC_KINDS = ("name", "none", "coords")


class LocationVocab:
    """Word ids for location names; unseen words hash into a fixed set of fallback buckets."""

    def __init__(self, words: Sequence[str], n_oov_buckets: int = 32, seed: int = 0x10C):
        self.words = tuple(words)
        self.n_oov_buckets = n_oov_buckets
        self.seed = seed
        self._ids = {w: len(MARKERS) + i for i, w in enumerate(self.words)}

    @classmethod
    def build(cls, pois: Sequence[Poi], n_oov_buckets: int = 32) -> "LocationVocab":
        words = sorted({w for p in pois for _, v in p.name.fields() for w in analyze(v)})
        return cls(words, n_oov_buckets)

    @property
    def size(self) -> int:
        return len(MARKERS) + len(self.words) + self.n_oov_buckets

    def word_id(self, word: str) -> int:
        if word in self._ids:
            return self._ids[word]
        h = kernels.fnv1a64(word.encode("utf-8"), self.seed)
        return len(MARKERS) + len(self.words) + h % self.n_oov_buckets

    def to_dict(self) -> dict:
        return {"words": list(self.words), "n_oov_buckets": self.n_oov_buckets, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "LocationVocab":
        return cls(d["words"], d["n_oov_buckets"], d["seed"])


def tokenize_location(name: PoiName, vocab: LocationVocab, max_tokens: int = 64) -> list[int]:
    ids = []
    for fname, value in name.fields():
        ids.append(_FIELD_MARKER[fname])
        ids.extend(vocab.word_id(w) for w in analyze(value))
    return ids[:max_tokens]


@dataclass(frozen=True)
class ModelConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    d1: int = 64
    d2: int = 32
    d: int = 64
    loc_kind: str = "name"
    loc_depth: int = 2
    loc_emb_dim: int = 32
    loc_hidden: int = 64
    max_name_tokens: int = 64
    geo_m: int = 5
    geo_dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.loc_kind not in LOC_KINDS:
            raise ConfigError(f"loc_kind must be one of {LOC_KINDS}")
        if self.loc_depth < 1:
            raise ConfigError("loc_depth must be >= 1")
        if min(self.d1, self.d2, self.d) < 1:
            raise ConfigError("embedding dims must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["features"] = dataclasses.asdict(self.features)
        d["features"]["word_ngrams"] = list(self.features.word_ngrams)
        d["features"]["char_ngrams"] = list(self.features.char_ngrams)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        feats = d.pop("features", None)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(features=FeatureConfig(**feats) if feats else FeatureConfig(), **d)


class TextEncoder:
    def __init__(self, features: FeatureConfig, out_dim: int, rng: np.random.Generator, name: str):
        self.features = features
        self.proj = DenseLayer(features.n_buckets, out_dim, "identity", rng, f"{name}.proj")

    def parameters(self) -> list[Parameter]:
        return self.proj.parameters()

    def apply(self, feats: np.ndarray):
        return dense_apply(self.proj, feats)


class MlpStack:
    """Dense layers with relu between them and an identity output layer."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator, name: str,
                 dropout: float = 0.0):
        n = len(dims) - 1
        self.layers = [
            DenseLayer(dims[i], dims[i + 1], "relu" if i < n - 1 else "identity", rng,
                       f"{name}.{i}")
            for i in range(n)
        ]
        self.dropout = dropout

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def apply(self, x: np.ndarray, rng: np.random.Generator | None = None):
        backs = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x, back = dense_apply(layer, x, self.dropout if i < last else 0.0, rng)
            backs.append(back)

        def backward(dy):
            for back in reversed(backs):
                dy = back(dy)
            return dy

        return x, backward


class LocationEncoder:
    """Mean-pooled name-token embeddings followed by a dense stack of ``depth`` layers."""

    def __init__(self, vocab: LocationVocab, emb_dim: int, hidden: int, out_dim: int,
                 depth: int, rng: np.random.Generator, name: str = "loc"):
        self.vocab = vocab
        self.table = EmbeddingTable(vocab.size, emb_dim, rng, f"{name}.tokens")
        dims = [emb_dim] + [hidden] * (depth - 1) + [out_dim]
        self.stack = MlpStack(dims, rng, f"{name}.stack")
        self.out_dim = out_dim

    def parameters(self) -> list[Parameter]:
        return self.table.parameters() + self.stack.parameters()

    def apply(self, token_ids: Sequence[Sequence[int]]):
        pooled, back_pool = embed_mean_batch(self.table, token_ids)
        out, back_stack = self.stack.apply(pooled)

        def backward(dy):
            back_pool(back_stack(dy))

        return out, backward


def scale_coords(coords: np.ndarray) -> np.ndarray:
    """Map [lat, long, ...] columns into [-1, 1] by dividing by 90 and 180."""
    coords = np.asarray(coords, dtype=np.float64)
    scale = np.tile([90.0, 180.0], coords.shape[-1] // 2)
    return coords / scale


@dataclass
class PoiInputs:
    """Pre-computed, parameter-free encoder inputs for a list of POIs."""

    ids: list[str]
    features: np.ndarray
    name_tokens: list[list[int]]
    coords: np.ndarray

    def take(self, rows) -> "PoiInputs":
        rows = np.asarray(rows, dtype=np.int64)
        return PoiInputs([self.ids[i] for i in rows], self.features[rows],
                         [self.name_tokens[i] for i in rows], self.coords[rows])


@dataclass
class QuestionInputs:
    ids: list[str]
    features: np.ndarray
    coords: np.ndarray  # (n, 2m) padded tagged locations, used by the coords variant only


class BiEncoder:
    def __init__(self, config: ModelConfig, vocab: LocationVocab):
        self.config = config
        self.vocab = vocab
        root = np.random.SeedSequence(config.seed)
        q_seed, p_seed, loc_seed, fuse_seed, qloc_seed = root.spawn(5)
        c = config
        self.loc = None
        self.q_loc = None
        self.q_fusion = None
        text_q_dim = c.d
        if c.loc_kind == "coords":
            d2 = 2 * c.geo_m
            text_q_dim = c.d1
            self.loc = MlpStack([2, d2, d2, d2], np.random.default_rng(loc_seed), "loc.mlp",
                                dropout=c.geo_dropout)
            qrng = np.random.default_rng(qloc_seed)
            self.q_loc = MlpStack([2 * c.geo_m, d2, d2, d2], qrng, "qloc.mlp",
                                  dropout=c.geo_dropout)
            self.q_fusion = DenseLayer(c.d1 + d2, c.d, "identity", qrng, "qfusion")
            fuse_in = c.d1 + d2
        elif c.loc_kind == "name":
            self.loc = LocationEncoder(vocab, c.loc_emb_dim, c.loc_hidden, c.d2, c.loc_depth,
                                       np.random.default_rng(loc_seed))
            fuse_in = c.d1 + c.d2
        else:
            fuse_in = c.d1
        self.q_text = TextEncoder(c.features, text_q_dim, np.random.default_rng(q_seed), "qtext")
        self.p_text = TextEncoder(c.features, c.d1, np.random.default_rng(p_seed), "ptext")
        self.fusion = DenseLayer(fuse_in, c.d, "identity", np.random.default_rng(fuse_seed),
                                 "fusion")
        if self.fusion.n_in != fuse_in:
            raise ShapeError("fusion input dim must equal d1 + d2")

    # -- parameter groups ----------------------------------------------------
    def question_parameters(self) -> list[Parameter]:
        ps = self.q_text.parameters()
        if self.q_loc is not None:
            ps += self.q_loc.parameters() + self.q_fusion.parameters()
        return ps

    def location_parameters(self) -> list[Parameter]:
        return self.loc.parameters() if self.loc is not None else []

    def poi_parameters(self) -> list[Parameter]:
        return self.p_text.parameters() + self.location_parameters() + self.fusion.parameters()

    def parameters(self) -> list[Parameter]:
        return self.question_parameters() + self.poi_parameters()

    # -- encoding ----------------------------------------------------------
    def encode_pois(self, inputs: PoiInputs, rng: np.random.Generator | None = None):
        """Batch POI vectors ``Dense([text, location])`` and a backward closure."""
        text, back_text = self.p_text.apply(inputs.features)
        back_loc = None
        if self.config.loc_kind == "name":
            loc, back_loc = self.loc.apply(inputs.name_tokens)
            fused_in = np.concatenate([text, loc], axis=1)
        elif self.config.loc_kind == "coords":
            loc, back_loc = self.loc.apply(scale_coords(inputs.coords), rng)
            fused_in = np.concatenate([text, loc], axis=1)
        else:
            fused_in = text
        out, back_fuse = dense_apply(self.fusion, fused_in)
        d1 = text.shape[1]

        def backward(dy):
            dcat = back_fuse(dy)
            back_text(dcat[:, :d1])
            if back_loc is not None:
                back_loc(dcat[:, d1:])

        return out, backward

    def encode_questions(self, inputs: QuestionInputs, rng: np.random.Generator | None = None):
        text, back_text = self.q_text.apply(inputs.features)
        if self.q_loc is None:
            return text, lambda dy: back_text(dy)
        loc, back_loc = self.q_loc.apply(scale_coords(inputs.coords), rng)
        out, back_fuse = dense_apply(self.q_fusion, np.concatenate([text, loc], axis=1))
        d1 = text.shape[1]

        def backward(dy):
            dcat = back_fuse(dy)
            back_text(dcat[:, :d1])
            back_loc(dcat[:, d1:])

        return out, backward

    # -- inputs --------------------------------------------------------------
    def poi_inputs(self, pois: Sequence[Poi], limits: DigestLimits = DigestLimits(),
                   digests: Sequence[ReviewDigest] | None = None) -> PoiInputs:
        pois = list(pois)
        if digests is None:
            digests = [poi_text(p, limits.mode, limits) for p in pois]
        for p, dg in zip(pois, digests):
            if not dg.sentences:
                raise ValueError(f"POI {p.id}: empty digest")
        feats = feature_matrix((dg.text for dg in digests), self.config.features)
        tokens = [tokenize_location(p.name, self.vocab, self.config.max_name_tokens) for p in pois]
        coords = np.array([[p.location.lat, p.location.long] for p in pois], dtype=np.float64)
        return PoiInputs([p.id for p in pois], feats, tokens, coords.reshape(len(pois), 2))

    def question_inputs(self, questions: Sequence[Question], seed: int = 0) -> QuestionInputs:
        questions = list(questions)
        for q in questions:
            if not q.text.strip():
                raise ValueError(f"question {q.id}: empty text")
        feats = feature_matrix((q.text for q in questions), self.config.features)
        m = self.config.geo_m
        coords = np.stack([pad_locations(q.tagged_locations or (), m, seed) for q in questions]) \
            if questions else np.zeros((0, 2 * m))
        return QuestionInputs([q.id for q in questions], feats, coords)

    # -- persistence -----------------------------------------------------------
    def header_config(self) -> dict:
        return {"model": self.config.to_dict(), "vocab": self.vocab.to_dict()}

    def to_bytes(self) -> bytes:
        return checkpoint_bytes(self.parameters(), self.header_config(), self.config.seed)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path) -> bytes:
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return data

    @classmethod
    def from_bytes(cls, data: bytes) -> "BiEncoder":
        header, tensors = parse_checkpoint(data)
        cfg = header["config"]
        model = cls(ModelConfig.from_dict(cfg["model"]), LocationVocab.from_dict(cfg["vocab"]))
        model.load_tensors(tensors)
        return model

    @classmethod
    def load(cls, path) -> "BiEncoder":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def load_tensors(self, tensors: dict[str, np.ndarray], strict: bool = True) -> None:
        for p in self.parameters():
            if p.name not in tensors:
                if strict:
                    raise KeyError(f"checkpoint lacks parameter {p.name!r}")
                continue
            if tensors[p.name].shape != p.shape:
                raise ShapeError(f"{p.name}: checkpoint shape {tensors[p.name].shape} "
                                 f"!= model shape {p.shape}")
            p.values[...] = tensors[p.name]


def pad_locations(tagged: Sequence, m: int, seed: int = 0) -> np.ndarray:
    """Flatten up to ``m`` (lat, long) points, padding with zeros; more than ``m`` are subsampled."""
    pts = [(g.lat, g.long) for g in tagged]
    if len(pts) > m:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(pts), size=m, replace=False))
        pts = [pts[i] for i in keep]
    out = np.zeros(2 * m, dtype=np.float64)
    if pts:
        out[: 2 * len(pts)] = np.asarray(pts, dtype=np.float64).reshape(-1)
    return out


# -- single-item operations ----------------------------------------------------

def encode_location(model: BiEncoder, name: PoiName) -> np.ndarray:
    if model.config.loc_kind != "name":
        raise ConfigError("model has no name-based location module")
    out, _ = model.loc.apply([tokenize_location(name, model.vocab, model.config.max_name_tokens)])
    return out[0]


def encode_poi(model: BiEncoder, poi: Poi, digest: ReviewDigest) -> np.ndarray:
    if not digest.sentences:
        raise ValueError(f"POI {poi.id}: empty digest")
    out, _ = model.encode_pois(model.poi_inputs([poi], digests=[digest]))
    return out[0]


def encode_question(model: BiEncoder, question: Question) -> np.ndarray:
    out, _ = model.encode_questions(model.question_inputs([question]))
    return out[0]


def cosine_sim01(h0: np.ndarray, h1: np.ndarray) -> float:
    """Cosine similarity rescaled from [-1, 1] to [0, 1]."""
    n0 = math.sqrt(float(h0 @ h0))
    n1 = math.sqrt(float(h1 @ h1))
    if n0 == 0.0 or n1 == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    cos = float(h0 @ h1) / (n0 * n1)
    return min(max((cos + 1.0) / 2.0, 0.0), 1.0)


def inner_product(r_q: np.ndarray, r_p: np.ndarray) -> float:
    r_q = np.asarray(r_q, dtype=np.float64)
    r_p = np.asarray(r_p, dtype=np.float64)
    if r_q.shape != r_p.shape:
        raise ShapeError(f"length mismatch: {r_q.shape} vs {r_p.shape}")
    return float(r_q @ r_p)
