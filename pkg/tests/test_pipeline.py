import json

import numpy as np
import pytest

from tabevent import ilp, neural, pipeline
from tabevent.core import EventSchema, LabelSequence
from tabevent.pipeline import (
    ExtractorModel,
    TaggerModel,
    TrainSettings,
    build_label_sets,
    project_tags,
    stage1,
    stage2,
    train_pipeline,
)

def make_schemas():
    return {
        "org.hiring": EventSchema(
            "org.hiring",
            frozenset({"employee", "employer"}),
            frozenset({"title"}),
            {"employee": 0.0, "employer": 0.0, "title": -1.0},
        ),
        "sport.win": EventSchema(
            "sport.win",
            frozenset({"athlete"}),
            frozenset({"medal"}),
            {"athlete": 0.0, "medal": -1.0},
        ),
    }


class FixedTagger(TaggerModel):
    """Tagger whose emissions are injected directly; decoding still runs."""

    def __init__(self, P, A, label_set, keyarg_P=None, cfg=None):
        self._P = np.asarray(P, dtype=float)
        self.params = {"crf.A": np.asarray(A, dtype=float)}
        self.label_set = label_set
        self.cfg = cfg or neural.ModelConfig(
            vocab={neural.UNK: 0}, num_labels=len(label_set)
        )

    def emissions(self, sentence, keyarg_ids=None):
        return self._P


def force_emissions(label_set, tag_lists):
    """Emission matrix that makes the given tags win by a wide margin."""
    P = np.zeros((len(tag_lists), len(label_set)))
    for i, tag in enumerate(tag_lists):
        P[i, label_set.index(tag)] = 10.0
    return P


def test_build_label_sets():
    labels1, labels2 = build_label_sets(make_schemas())
    assert labels1.roles == (
        "org.hiring:employee",
        "org.hiring:employer",
        "sport.win:athlete",
    )
    assert labels1.groups == {
        "org.hiring": frozenset({"org.hiring:employee", "org.hiring:employer"}),
        "sport.win": frozenset({"sport.win:athlete"}),
    }
    assert labels2.roles == ("org.hiring:title", "sport.win:medal")


def test_project_tags():
    labels1, _ = build_label_sets(make_schemas())
    tags = ["B-org.hiring:employee", "B-org.hiring:title", "O"]
    assert project_tags(tags, labels1) == ["B-org.hiring:employee", "O", "O"]


class TestStage1:
    def sentence(self, fixture_corpus):
        return fixture_corpus[4]  # any sentence; emissions are injected

    def test_detects_type_with_all_keys(self, fixture_corpus):
        labels1, _ = build_label_sets(make_schemas())
        tags = ["B-org.hiring:employee", "O", "B-org.hiring:employer", "O", "O", "O", "O", "O"]
        model = FixedTagger(
            force_emissions(labels1, tags), np.zeros((len(labels1),) * 2), labels1
        )
        got = stage1(self.sentence(fixture_corpus), model, decoder="viterbi")
        assert [t for t, _ in got] == ["org.hiring"]
        assert got[0][1].tags == tuple(tags)

    def test_all_outside_detects_nothing(self, fixture_corpus):
        labels1, _ = build_label_sets(make_schemas())
        tags = ["O"] * 8
        model = FixedTagger(
            force_emissions(labels1, tags), np.zeros((len(labels1),) * 2), labels1
        )
        assert stage1(self.sentence(fixture_corpus), model, decoder="ilp") == []

    def test_partial_keys_detect_nothing_under_viterbi(self, fixture_corpus):
        labels1, _ = build_label_sets(make_schemas())
        tags = ["B-org.hiring:employee"] + ["O"] * 7
        model = FixedTagger(
            force_emissions(labels1, tags), np.zeros((len(labels1),) * 2), labels1
        )
        assert stage1(self.sentence(fixture_corpus), model, decoder="viterbi") == []

    def test_unknown_decoder(self, fixture_corpus):
        labels1, _ = build_label_sets(make_schemas())
        model = FixedTagger(np.zeros((8, len(labels1))), np.zeros((len(labels1),) * 2), labels1)
        with pytest.raises(ValueError, match="decoder"):
            stage1(self.sentence(fixture_corpus), model, decoder="beam")

    def test_multi_mode_outputs_pass_constraints(self, fixture_corpus):
        labels1, _ = build_label_sets(make_schemas())
        rng = np.random.default_rng(0)
        model = FixedTagger(
            rng.normal(size=(8, len(labels1))), rng.normal(size=(len(labels1),) * 2), labels1
        )
        P = model.emissions(None)
        prob = ilp.DecodeProblem(P, model.transitions, labels1)
        for seq in ilp.ilp_decode_multi(prob).sequences:
            assert ilp.check_constraints(seq.tags, labels1) == []


class TestStage2:
    def setup_models(self, sentence_len):
        schemas = make_schemas()
        labels1, labels2 = build_label_sets(schemas)
        cfg2 = neural.ModelConfig(
            vocab={neural.UNK: 0},
            num_labels=len(labels2),
            keyarg_embed_dim=2,
            num_keyarg_labels=len(labels1),
        )
        return schemas, labels1, labels2, cfg2

    def detection(self, labels1, tags):
        return [("org.hiring", LabelSequence(tuple(tags), score=0.0))]

    def test_merges_nonkey_span(self, fixture_corpus):
        sent = fixture_corpus[4]  # 8 tokens
        schemas, labels1, labels2, cfg2 = self.setup_models(len(sent))
        key_tags = ["B-org.hiring:employee", "O", "B-org.hiring:employer"] + ["O"] * 5
        out_tags = ["O", "O", "O", "B-org.hiring:title", "I-org.hiring:title", "O", "O", "O"]
        model2 = FixedTagger(
            force_emissions(labels2, out_tags), np.zeros((len(labels2),) * 2), labels2, cfg=cfg2
        )
        mentions = stage2(sent, model2, labels1, self.detection(labels1, key_tags), schemas)
        assert len(mentions) == 1
        args = {(a.role, a.start, a.end) for a in mentions[0].arguments}
        assert args == {("employee", 0, 1), ("employer", 2, 3), ("title", 3, 5)}

    def test_nonkey_never_overwrites_key_span(self, fixture_corpus):
        sent = fixture_corpus[4]
        schemas, labels1, labels2, cfg2 = self.setup_models(len(sent))
        key_tags = ["B-org.hiring:employee", "O", "B-org.hiring:employer"] + ["O"] * 5
        # stage-2 tries to claim token 2, which belongs to a key span
        out_tags = ["O", "O", "B-org.hiring:title", "I-org.hiring:title"] + ["O"] * 4
        model2 = FixedTagger(
            force_emissions(labels2, out_tags), np.zeros((len(labels2),) * 2), labels2, cfg=cfg2
        )
        mentions = stage2(sent, model2, labels1, self.detection(labels1, key_tags), schemas)
        roles = {a.role for a in mentions[0].arguments}
        assert roles == {"employee", "employer"}
        key_args = {(a.role, a.start, a.end) for a in mentions[0].arguments}
        assert ("employee", 0, 1) in key_args and ("employer", 2, 3) in key_args

    def test_foreign_type_nonkey_dropped(self, fixture_corpus):
        sent = fixture_corpus[4]
        schemas, labels1, labels2, cfg2 = self.setup_models(len(sent))
        key_tags = ["B-org.hiring:employee", "O", "B-org.hiring:employer"] + ["O"] * 5
        out_tags = ["O"] * 5 + ["B-sport.win:medal", "O", "O"]
        model2 = FixedTagger(
            force_emissions(labels2, out_tags), np.zeros((len(labels2),) * 2), labels2, cfg=cfg2
        )
        mentions = stage2(sent, model2, labels1, self.detection(labels1, key_tags), schemas)
        assert {a.role for a in mentions[0].arguments} == {"employee", "employer"}

    def test_duplicate_role_keeps_leftmost(self, fixture_corpus):
        sent = fixture_corpus[4]
        schemas, labels1, labels2, cfg2 = self.setup_models(len(sent))
        key_tags = ["B-org.hiring:employee", "O", "B-org.hiring:employer"] + ["O"] * 5
        out_tags = ["O", "O", "O", "B-org.hiring:title", "O", "B-org.hiring:title", "O", "O"]
        model2 = FixedTagger(
            force_emissions(labels2, out_tags), np.zeros((len(labels2),) * 2), labels2, cfg=cfg2
        )
        mentions = stage2(sent, model2, labels1, self.detection(labels1, key_tags), schemas)
        titles = [(a.start, a.end) for a in mentions[0].arguments if a.role == "title"]
        assert titles == [(3, 4)]

    def test_label_set_size_mismatch(self, fixture_corpus):
        sent = fixture_corpus[4]
        schemas, labels1, labels2, cfg2 = self.setup_models(len(sent))
        cfg_bad = neural.ModelConfig(
            vocab={neural.UNK: 0},
            num_labels=len(labels2),
            keyarg_embed_dim=2,
            num_keyarg_labels=len(labels1) + 3,
        )
        model2 = FixedTagger(
            np.zeros((len(sent), len(labels2))), np.zeros((len(labels2),) * 2), labels2, cfg=cfg_bad
        )
        with pytest.raises(ValueError, match="key-argument"):
            stage2(sent, model2, labels1, self.detection(labels1, ["O"] * len(sent)), schemas)


def fast_settings(**kwargs):
    defaults = dict(
        epochs=40,
        lr=0.02,
        seed=0,
        dev_fraction=0.0,
        embed_dim=12,
        hidden1=10,
        hidden2=10,
        keyarg_dim=4,
        dropout=0.0,
    )
    defaults.update(kwargs)
    return TrainSettings(**defaults)


class TestTraining:
    def test_empty_dataset(self):
        with pytest.raises(ValueError, match="empty"):
            train_pipeline([], make_schemas())

    def test_single_instance_loss_monotone(self, fixture_dataset, fixture_schemas):
        records, _ = fixture_dataset
        one = [r for r in records if r["sentence_id"] == "S2"]
        settings = fast_settings(epochs=6, lr=1e-3)
        _, history = train_pipeline(one, fixture_schemas, settings)
        nll = history["stage1"]["train_nll"]
        assert len(nll) == 6
        assert all(a > b for a, b in zip(nll, nll[1:]))

    def test_training_is_deterministic(self, fixture_dataset, fixture_schemas):
        records, _ = fixture_dataset
        blobs = []
        for _ in range(2):
            model, _ = train_pipeline(records, fixture_schemas, fast_settings(epochs=3))
            blobs.append(json.dumps(model.to_dict(), sort_keys=True))
        assert blobs[0] == blobs[1]

    def test_overfit_reproduces_nonkey_annotation(self, fixture_dataset, fixture_schemas, fixture_corpus):
        records, _ = fixture_dataset
        model, _ = train_pipeline(records, fixture_schemas, fast_settings(epochs=60))
        s1 = fixture_corpus[0]
        rec = pipeline.extract_sentence(s1, model, decoder="ilp")
        assert len(rec["events"]) == 1
        event = rec["events"][0]
        assert event["event_type"] == "business.acquisition"
        args = {a["role"]: tuple(a["span"]) for a in event["arguments"]}
        assert args["divisions_formed"] == (12, 16)
        assert args["company_acquired"] == (0, 2)
        by_role = {a["role"]: a["text"] for a in event["arguments"]}
        assert by_role["divisions_formed"] == "Service Management Business Unit"

    def test_model_save_load_roundtrip(self, fixture_dataset, fixture_schemas, fixture_corpus, tmp_path):
        records, _ = fixture_dataset
        model, _ = train_pipeline(records, fixture_schemas, fast_settings(epochs=5))
        path = tmp_path / "model.json"
        model.save(str(path), meta={"seed": 0})
        loaded = ExtractorModel.load(str(path))
        before = pipeline.extract_corpus(fixture_corpus, model, decoder="ilp")
        after = pipeline.extract_corpus(fixture_corpus, loaded, decoder="ilp")
        assert before == after

    def test_load_rejects_unknown_version(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": 99}')
        with pytest.raises(ValueError, match="version"):
            ExtractorModel.load(str(path))
