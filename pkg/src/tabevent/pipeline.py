"""Two-stage extraction: key-argument tagging, then non-key arguments.

Stage 1 tags key roles only and declares an event type when every key role
of that type carries a B- tag. Stage 2 re-tags the sentence with the
stage-1 labels as an extra input feature and fills in non-key arguments;
it never overwrites a stage-1 key span.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import crf, ilp, neural
from .core import (
    OUTSIDE,
    Argument,
    EventMention,
    EventSchema,
    LabelSequence,
    LabelSet,
    ParsedSentence,
    normalize_surface,
    spans_from_tags,
)
from .supervision import role_label, split_role

DECODERS = ("viterbi", "ilp", "ilp_multi")


@dataclass
class TaggerModel:
    cfg: neural.ModelConfig
    params: dict[str, np.ndarray]
    label_set: LabelSet

    def to_dict(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "label_set": self.label_set.to_dict(),
            "tensors": neural.tensors_to_dict(self.params),
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "TaggerModel":
        return cls(
            cfg=neural.ModelConfig.from_dict(rec["config"]),
            params=neural.tensors_from_dict(rec["tensors"]),
            label_set=LabelSet.from_dict(rec["label_set"]),
        )

    def emissions(
        self, sentence: ParsedSentence, keyarg_ids: Sequence[int] | None = None
    ) -> np.ndarray:
        ids = [self.cfg.token_id(t) for t in sentence.normalized]
        P, _ = neural.forward(ids, self.params, self.cfg, keyarg_ids=keyarg_ids)
        return P

    @property
    def transitions(self) -> np.ndarray:
        return self.params["crf.A"]


@dataclass
class ExtractorModel:
    stage1: TaggerModel
    stage2: TaggerModel
    schemas: dict[str, EventSchema]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "stage1": self.stage1.to_dict(),
            "stage2": self.stage2.to_dict(),
            "schemas": [self.schemas[t].to_dict() for t in sorted(self.schemas)],
        }

    def save(self, path: str, meta: Mapping | None = None) -> None:
        payload = self.to_dict()
        if meta is not None:
            payload["meta"] = dict(meta)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "ExtractorModel":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != 1:
            raise ValueError(f"{path}: unsupported model format version {version!r}")
        schemas = {
            rec["event_type"]: EventSchema.from_dict(rec) for rec in payload["schemas"]
        }
        return cls(
            stage1=TaggerModel.from_dict(payload["stage1"]),
            stage2=TaggerModel.from_dict(payload["stage2"]),
            schemas=schemas,
        )


def build_label_sets(schemas: Mapping[str, EventSchema]) -> tuple[LabelSet, LabelSet]:
    """Stage-1 label set over key roles, stage-2 over non-key roles."""
    key_roles = []
    nonkey_roles = []
    groups: dict[str, set[str]] = {}
    for event_type in sorted(schemas):
        schema = schemas[event_type]
        type_group = set()
        for prop in sorted(schema.key_args):
            role = role_label(event_type, prop)
            key_roles.append(role)
            type_group.add(role)
        groups[event_type] = type_group
        for prop in sorted(schema.nonkey_args):
            nonkey_roles.append(role_label(event_type, prop))
    return LabelSet(key_roles, groups), LabelSet(nonkey_roles)


def project_tags(tags: Sequence[str], target: LabelSet) -> list[str]:
    """Map tags onto a smaller label set; foreign roles become O."""
    return [tag if tag in target else OUTSIDE for tag in tags]


def stage1(
    sentence: ParsedSentence,
    model: TaggerModel,
    decoder: str = "ilp_multi",
    lambda_factor: float = 0.5,
    max_solutions: int = 10,
) -> list[tuple[str, LabelSequence]]:
    """Decode key arguments and detect event types.

    Returns one (event_type, sequence) pair per detected type; a type is
    detected when all of its key roles appear as B- tags in a decoded
    sequence. Sequences arrive best-first, and each type keeps the first
    sequence that detects it.
    """
    if decoder not in DECODERS:
        raise ValueError(f"unknown decoder {decoder!r}; expected one of {DECODERS}")
    P = model.emissions(sentence)
    A = model.transitions
    labels = model.label_set
    if decoder == "viterbi":
        path, score = crf.viterbi(P, A)
        sequences = [LabelSequence(tuple(labels.labels[i] for i in path), score)]
    else:
        prob = ilp.DecodeProblem(
            P, A, labels, lambda_factor=lambda_factor, max_solutions=max_solutions
        )
        if decoder == "ilp":
            sequences = [ilp.ilp_decode(prob)]
        else:
            sequences = ilp.ilp_decode_multi(prob).sequences

    detections: list[tuple[str, LabelSequence]] = []
    seen: set[str] = set()
    for seq in sequences:
        begun = {tag[2:] for tag in seq.tags if tag.startswith("B-")}
        for event_type in sorted(labels.groups):
            if event_type in seen:
                continue
            if labels.groups[event_type] <= begun:
                detections.append((event_type, seq))
                seen.add(event_type)
    return detections


def _keyarg_feature_ids(
    tags: Sequence[str], event_type: str, schema: EventSchema, labels1: LabelSet
) -> list[int]:
    """Stage-1 tag ids restricted to this event type's key roles."""
    key_roles = {role_label(event_type, p) for p in schema.key_args}
    ids = []
    for tag in tags:
        role = LabelSet.role_of(tag)
        if role in key_roles and tag in labels1:
            ids.append(labels1.index(tag))
        else:
            ids.append(labels1.index(OUTSIDE))
    return ids


def stage2(
    sentence: ParsedSentence,
    model: TaggerModel,
    labels1: LabelSet,
    detections: Sequence[tuple[str, LabelSequence]],
    schemas: Mapping[str, EventSchema],
) -> list[EventMention]:
    """Fill in non-key arguments for each stage-1 detection.

    Plain Viterbi decoding; non-key spans that collide with a key span are
    dropped so stage-1 output survives bit-exactly in the mention.
    """
    if model.cfg.num_keyarg_labels != len(labels1):
        raise ValueError(
            f"stage-2 model expects {model.cfg.num_keyarg_labels} key-argument "
            f"labels, stage-1 provides {len(labels1)}"
        )
    mentions: list[EventMention] = []
    for event_type, seq in detections:
        schema = schemas[event_type]
        feature_ids = _keyarg_feature_ids(seq.tags, event_type, schema, labels1)
        P = model.emissions(sentence, keyarg_ids=feature_ids)
        path, _ = crf.viterbi(P, model.transitions)
        tags2 = [model.label_set.labels[i] for i in path]

        arguments: list[Argument] = []
        occupied: set[int] = set()
        for role, start, end in spans_from_tags(seq.tags):
            role_type, prop = split_role(role)
            if role_type == event_type and prop in schema.key_args:
                arguments.append(Argument(prop, start, end))
                occupied |= set(range(start, end))
        claimed_roles = {a.role for a in arguments}
        for role, start, end in spans_from_tags(tags2):
            role_type, prop = split_role(role)
            if role_type != event_type or prop not in schema.nonkey_args:
                continue
            if prop in claimed_roles:
                continue
            if set(range(start, end)) & occupied:
                continue
            arguments.append(Argument(prop, start, end))
            claimed_roles.add(prop)
            occupied |= set(range(start, end))
        arguments.sort(key=lambda a: (a.start, a.end, a.role))
        mentions.append(EventMention(event_type, tuple(arguments)))
    return mentions


def extract_sentence(
    sentence: ParsedSentence,
    model: ExtractorModel,
    decoder: str = "ilp_multi",
    lambda_factor: float = 0.5,
    max_solutions: int = 10,
) -> dict:
    """Full two-stage extraction of one sentence into an output record."""
    detections = stage1(
        sentence,
        model.stage1,
        decoder=decoder,
        lambda_factor=lambda_factor,
        max_solutions=max_solutions,
    )
    mentions = stage2(
        sentence, model.stage2, model.stage1.label_set, detections, model.schemas
    )
    surfaces = sentence.surfaces
    events = [
        {
            "event_type": m.event_type,
            "arguments": [a.to_dict(surfaces) for a in m.arguments],
        }
        for m in sorted(mentions, key=lambda m: m.event_type)
    ]
    return {"sentence_id": sentence.id, "events": events}


def extract_corpus(
    sentences: Sequence[ParsedSentence],
    model: ExtractorModel,
    decoder: str = "ilp_multi",
    lambda_factor: float = 0.5,
    max_solutions: int = 10,
) -> list[dict]:
    return [
        extract_sentence(s, model, decoder, lambda_factor, max_solutions)
        for s in sentences
    ]


# ---------------------------------------------------------------------------
# Training.
# ---------------------------------------------------------------------------

@dataclass
class TrainSettings:
    epochs: int = 50
    lr: float = 1e-3
    seed: int = 0
    dev_fraction: float = 0.1
    patience: int = 5
    embed_dim: int = 200
    hidden1: int = 100
    hidden2: int = 150
    keyarg_dim: int = 50
    dropout: float = 0.5
    embeddings_path: str | None = None


@dataclass
class _Instance:
    token_ids: list[int]
    gold: list[int]
    keyarg_ids: list[int] | None = None


def _train_tagger(
    instances: Sequence[_Instance],
    cfg: neural.ModelConfig,
    label_set: LabelSet,
    settings: TrainSettings,
    seed: int,
) -> tuple[TaggerModel, dict]:
    """Instance-at-a-time training with early stopping on dev NLL."""
    if not instances:
        raise ValueError("empty training set")
    init_rng = np.random.default_rng(seed)
    params = neural.init_params(cfg, init_rng)
    if settings.embeddings_path:
        params["embeddings"] = neural.load_embeddings(
            settings.embeddings_path, cfg.vocab, cfg.embed_dim, init_rng
        )
    params["crf.A"] = np.zeros((cfg.num_labels, cfg.num_labels))

    shuffle_rng = np.random.default_rng(seed + 1)
    dropout_rng = np.random.default_rng(seed + 2)
    order = shuffle_rng.permutation(len(instances))
    n_dev = int(len(instances) * settings.dev_fraction)
    dev_idx = [int(i) for i in order[:n_dev]]
    train_idx = [int(i) for i in order[n_dev:]]
    if not train_idx:
        train_idx, dev_idx = dev_idx, []

    state = neural.AdamState()
    history: dict[str, list[float]] = {"train_nll": [], "dev_nll": []}
    best_dev = float("inf")
    best_params = None
    bad_epochs = 0

    def nll(inst: _Instance, train: bool) -> float | tuple:
        P, cache = neural.forward(
            inst.token_ids,
            params,
            cfg,
            keyarg_ids=inst.keyarg_ids,
            train=train,
            rng=dropout_rng if train else None,
        )
        loss, dP, dA = crf.nll_loss_and_grads(P, params["crf.A"], inst.gold)
        if not train:
            return loss
        grads = neural.backward(cache, dP)
        grads["crf.A"] = dA
        return loss, grads

    for epoch in range(settings.epochs):
        epoch_loss = 0.0
        for i in shuffle_rng.permutation(len(train_idx)):
            inst = instances[train_idx[int(i)]]
            loss, grads = nll(inst, train=True)
            epoch_loss += loss
            neural.sgd_step(params, grads, state, lr=settings.lr)
        history["train_nll"].append(epoch_loss / len(train_idx))
        if dev_idx:
            dev_loss = sum(nll(instances[i], train=False) for i in dev_idx) / len(dev_idx)
            history["dev_nll"].append(dev_loss)
            if dev_loss < best_dev - 1e-9:
                best_dev = dev_loss
                best_params = {k: v.copy() for k, v in params.items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > settings.patience:
                    break
    if best_params is not None:
        params = best_params
    return TaggerModel(cfg=cfg, params=params, label_set=label_set), history


def train_pipeline(
    records: Sequence[Mapping],
    schemas: Mapping[str, EventSchema],
    settings: TrainSettings | None = None,
) -> tuple[ExtractorModel, dict]:
    """Train both stages from generated dataset records.

    Stage 1 learns key-role projections of the gold labels over all records;
    stage 2 learns non-key roles per (positive record, event type) with the
    gold key labels as teacher-forced input features.
    """
    settings = settings or TrainSettings()
    records = list(records)
    if not records:
        raise ValueError("empty dataset")
    labels1, labels2 = build_label_sets(schemas)
    vocab = neural.build_vocab(
        [[normalize_surface(t) for t in rec["tokens"]] for rec in records]
    )

    cfg1 = neural.ModelConfig(
        vocab=vocab,
        num_labels=len(labels1),
        embed_dim=settings.embed_dim,
        lstm_hidden=settings.hidden1,
        dropout_rate=settings.dropout,
    )
    cfg2 = neural.ModelConfig(
        vocab=vocab,
        num_labels=len(labels2),
        embed_dim=settings.embed_dim,
        lstm_hidden=settings.hidden2,
        keyarg_embed_dim=settings.keyarg_dim,
        num_keyarg_labels=len(labels1),
        dropout_rate=settings.dropout,
    )

    stage1_instances: list[_Instance] = []
    stage2_instances: list[_Instance] = []
    for rec in records:
        token_ids = [cfg1.token_id(normalize_surface(t)) for t in rec["tokens"]]
        tags = list(rec["labels"])
        gold1 = [labels1.index(t) for t in project_tags(tags, labels1)]
        stage1_instances.append(_Instance(token_ids, gold1))
        if rec.get("polarity") != "positive":
            continue
        for event_type in sorted(rec.get("event_types", [])):
            if event_type not in schemas:
                raise ValueError(f"record {rec.get('sentence_id')}: unknown event type {event_type!r}")
            schema = schemas[event_type]
            feature_ids = _keyarg_feature_ids(tags, event_type, schema, labels1)
            nonkey_roles = {role_label(event_type, p) for p in schema.nonkey_args}
            gold2_tags = [
                t if (LabelSet.role_of(t) in nonkey_roles and t in labels2) else OUTSIDE
                for t in tags
            ]
            gold2 = [labels2.index(t) for t in gold2_tags]
            stage2_instances.append(_Instance(token_ids, gold2, keyarg_ids=feature_ids))

    model1, hist1 = _train_tagger(stage1_instances, cfg1, labels1, settings, settings.seed)
    if stage2_instances:
        model2, hist2 = _train_tagger(
            stage2_instances, cfg2, labels2, settings, settings.seed + 1000
        )
    else:
        # No positive instance carries non-key material; keep an untrained
        # stage-2 model so extraction still runs (it will tag everything O).
        rng = np.random.default_rng(settings.seed + 1000)
        params2 = neural.init_params(cfg2, rng)
        params2["crf.A"] = np.zeros((cfg2.num_labels, cfg2.num_labels))
        model2 = TaggerModel(cfg=cfg2, params=params2, label_set=labels2)
        hist2 = {"train_nll": [], "dev_nll": []}
    model = ExtractorModel(stage1=model1, stage2=model2, schemas=dict(schemas))
    return model, {"stage1": hist1, "stage2": hist2}
