import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.data.answers import AnswerVocab, build_answer_vocab, relabel
from src.data.dataset import (generate_dataset, metadata_path, read_dataset, read_metadata, write_dataset,
                              write_metadata)
from src.data.grammar import check_caption, load_grammar, relation_between, save_grammar, split_grammar
from src.data.scene import QAPair, SceneExample, collate, generate_scene, grammar_vocab
from src.data.vocab import (MASK_ID, PAD_ID, RESERVED, STOP_ID, UNK_ID, Vocab, detokenize, text_slots,
                            tokenize)
from src.utils.errors import ConfigError, DatasetParseError


# Vocabulaire et tokenisation

def test_reserved_ids():
    v = Vocab(["a", "red", "square"])
    assert [v.encode(t) for t in RESERVED] == list(range(6))
    assert len(v) == 9
    assert list(v.regular_ids) == [6, 7, 8]
    assert Vocab.from_list(v.to_list()).to_list() == v.to_list()


def test_tokenize_examples():
    v = Vocab(["a", "red", "square"])
    out = tokenize("a red square", v, 5)
    assert out.ids == [v.encode("a"), v.encode("red"), v.encode("square"), PAD_ID, PAD_ID]
    assert out.length == 3

    words = [f"w{i}" for i in range(25)]
    long_vocab = Vocab(words)
    out = tokenize(" ".join(words), long_vocab, 20)
    assert out.ids == [long_vocab.encode(w) for w in words[:20]]
    assert out.length == 20

    out = tokenize("zzz-unknown", v, 2)
    assert out.ids == [UNK_ID, PAD_ID]
    assert out.length == 1


def test_tokenize_empty_string():
    out = tokenize("", Vocab(["a"]), 3)
    assert out.ids == [PAD_ID] * 3
    assert out.length == 0


def test_text_slots_and_detokenize():
    v = Vocab(["a", "red", "square"])
    ids = [v.encode("a"), v.encode("red")]
    assert text_slots(ids, 4) == ids + [STOP_ID, PAD_ID, PAD_ID]
    assert detokenize(text_slots(ids, 4), v) == "a red"
    assert detokenize([MASK_ID, v.encode("square"), STOP_ID, v.encode("a")], v) == "square"


# Grammaire

def test_relation_between():
    left = [0.0, 0.0, 0.2, 0.2]
    right = [0.6, 0.1, 0.8, 0.3]
    assert relation_between(left, right) == "left"
    assert relation_between(right, left) == "right"
    assert relation_between([0.0, 0.0, 0.2, 0.2], [0.05, 0.6, 0.25, 0.8]) == "above"


def test_split_grammar_partitions_templates(grammar):
    pretrain, downstream = split_grammar(grammar)
    assert set(pretrain.caption_templates).isdisjoint(downstream.caption_templates)
    assert sorted(pretrain.caption_templates + downstream.caption_templates) == sorted(grammar.caption_templates)


def test_grammar_round_trip(tmp_path, grammar):
    path = tmp_path / "nested" / "grammar.json"
    save_grammar(grammar, str(path))
    assert load_grammar(str(path)) == grammar
    assert [p.name for p in path.parent.iterdir()] == ["grammar.json"]


def test_invalid_grammar_is_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"classes": []}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_grammar(str(path))


# Scènes

def test_generate_scene_is_deterministic(grammar):
    a = generate_scene(42, grammar, N=8, noise=0.1)
    b = generate_scene(42, grammar, N=8, noise=0.1)
    assert a.to_dict() == b.to_dict()
    assert generate_scene(43, grammar, N=8, noise=0.1).to_dict() != a.to_dict()


def test_noiseless_class_probs_match_objects(grammar):
    for seed in range(20):
        scene = generate_scene(seed, grammar, N=8, noise=0.0)
        for obj in scene.objects:
            probs = scene.regions[obj["region"]].class_probs
            assert grammar.classes[int(np.argmax(probs))] == obj["class"]


def test_regions_are_valid(grammar):
    scene = generate_scene(3, grammar, N=8, noise=0.2)
    assert len(scene.regions) == 8
    for region in scene.regions:
        region.validate()
        assert region.geometry.shape == (5,)


def test_region_count_too_small(grammar):
    with pytest.raises(ConfigError):
        generate_scene(0, grammar, N=grammar.max_objects - 1, noise=0.0)
    assert len(generate_scene(0, grammar, N=grammar.max_objects, noise=0.0).regions) == grammar.max_objects


def test_captions_consistent_with_scenes(grammar):
    vocab = grammar_vocab(grammar)
    for seed in range(1000):
        scene = generate_scene(seed, grammar, N=8, noise=0.1)
        caption = detokenize(scene.caption, vocab)
        assert check_caption(caption, scene.objects, grammar), (seed, caption)


def test_check_caption_relation(grammar):
    objects = [
        {"class": "circle", "color": "red", "size": "small", "box": [0.0, 0.0, 0.2, 0.2]},
        {"class": "square", "color": "blue", "size": "large", "box": [0.6, 0.1, 0.8, 0.3]},
    ]
    assert check_caption("a small red circle is left of a large blue square", objects, grammar)
    assert not check_caption("a small red circle is right of a large blue square", objects, grammar)
    assert not check_caption("a small green circle is left of a large blue square", objects, grammar)


def test_qa_pairs(grammar):
    scene = generate_scene(11, grammar, N=8, noise=0.0)
    answers = grammar.answers
    assert scene.qa
    for qa in scene.qa:
        assert qa.soft_label[qa.answer_id] == 1.0
        assert answers[qa.answer_id] == qa.answer
        assert sum(qa.soft_label) == 1.0


def test_collate_shapes(scenes):
    batch = collate(scenes[:3])
    assert batch["features"].shape == (3, 4, 32)
    assert batch["class_probs"].shape == (3, 4, 16)
    assert batch["geometry"].shape == (3, 4, 5)


def test_shared_vocab_for_split_grammar(grammar):
    full_vocab = grammar_vocab(grammar)
    _, downstream = split_grammar(grammar)
    scene = generate_scene(0, downstream, N=8, noise=0.1, vocab=full_vocab)
    assert UNK_ID not in scene.caption
    assert all(i < len(full_vocab) for i in scene.caption)


# Jeux de données

def test_dataset_round_trip(tmp_path, grammar):
    examples = generate_dataset(grammar, range(100), N=8, noise=0.1, d_in=32)
    path = str(tmp_path / "d.jsonl")
    assert write_dataset(examples, path) == 100
    loaded = read_dataset(path)
    assert [e.to_dict() for e in loaded] == [e.to_dict() for e in examples]


def test_truncated_line_names_line(tmp_path, grammar):
    path = tmp_path / "d.jsonl"
    write_dataset(generate_dataset(grammar, range(3), N=8, noise=0.1, d_in=32), str(path))
    text = path.read_text(encoding="utf-8")
    path.write_text(text[:-40], encoding="utf-8")
    with pytest.raises(DatasetParseError) as info:
        read_dataset(str(path))
    assert info.value.line_number == 3
    assert "3" in str(info.value)


def test_missing_field_is_parse_error(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"scene_id": "x"}\n', encoding="utf-8")
    with pytest.raises(DatasetParseError, match="Ligne 1"):
        read_dataset(str(path))


def test_empty_file_is_empty_dataset(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert read_dataset(str(path)) == []


def test_metadata_sidecar(tmp_path, grammar):
    path = str(tmp_path / "d.jsonl")
    write_metadata(path, grammar, extra={"seed": 1})
    assert metadata_path(path).endswith(".meta.json")
    meta = read_metadata(path)
    assert meta["vocab"].to_list() == grammar_vocab(grammar).to_list()
    assert meta["answers"] == grammar.answers
    assert meta["grammar"] == grammar
    assert meta["seed"] == 1


# Vocabulaire de réponses

def _scene_with_answers(answers):
    qa = [QAPair([6], a, -1, []) for a in answers]
    return SceneExample(scene_id="s", regions=[], caption=[], qa=qa)


def test_answer_vocab_frequency_order():
    examples = [_scene_with_answers(["red"] * 5 + ["blue"] * 3 + ["two"])]
    vocab, relabeled = build_answer_vocab(examples, 2)
    assert vocab.answers == ["red", "blue"]
    ids = [qa.answer_id for qa in relabeled[0].qa]
    assert ids.count(0) == 5 and ids.count(1) == 3 and ids.count(-1) == 1
    assert relabeled[0].qa[-1].soft_label == [0.0, 0.0]


def test_answer_vocab_tie_is_lexicographic():
    vocab, _ = build_answer_vocab([_scene_with_answers(["red", "red", "blue", "blue"])], 1)
    assert vocab.answers == ["blue"]


def test_answer_vocab_fewer_than_k_uses_all():
    vocab, _ = build_answer_vocab([_scene_with_answers(["red", "blue"])], 32)
    assert len(vocab) == 2


def test_relabel_transports_soft_labels():
    source = ["red", "blue", "green"]
    qa = QAPair([6], "blue", 1, [0.0, 0.6, 0.4])
    scene = SceneExample(scene_id="s", regions=[], caption=[], qa=[qa])
    out = relabel([scene], AnswerVocab(["green", "blue"]), source_answers=source)
    assert out[0].qa[0].soft_label == [0.4, 0.6]
    assert out[0].qa[0].answer_id == 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["red", "blue", "two", "cube", "small"]), min_size=1, max_size=40),
       st.integers(1, 6))
def test_answer_vocab_is_top_k(answers, k):
    vocab, _ = build_answer_vocab([_scene_with_answers(answers)], k)
    counts = {a: answers.count(a) for a in set(answers)}
    assert len(vocab) == min(k, len(counts))
    kept = [counts[a] for a in vocab.answers]
    assert kept == sorted(kept, reverse=True)
    dropped = [c for a, c in counts.items() if a not in vocab.index]
    assert all(c <= min(kept) for c in dropped)
