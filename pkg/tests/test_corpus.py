import json

import pytest
from hypothesis import given, strategies as st

from rewriter_evaluator import corpus as C
from rewriter_evaluator.errors import ContractViolation
from rewriter_evaluator.vocab import RESERVED, Vocabulary


def spec(**kw):
    base = dict(kind="noisy-reversal", vocab_size=16, min_len=3, max_len=8, noise_rate=0.2, seed=3)
    base.update(kw)
    return C.TaskSpec(**base)


class TestTaskSpec:
    @pytest.mark.parametrize(
        "kw",
        [dict(kind="nope"), dict(vocab_size=7), dict(noise_rate=0.5), dict(min_len=2), dict(max_len=21), dict(min_len=9, max_len=8)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ContractViolation):
            spec(**kw)


class TestGenerate:
    def test_deterministic(self):
        assert C.generate(spec(), 50).pairs == C.generate(spec(), 50).pairs

    def test_seed_changes_output(self):
        assert C.generate(spec(), 50).pairs != C.generate(spec(seed=4), 50).pairs

    def test_zero_noise_reversal(self):
        for src, ref in C.generate(spec(noise_rate=0.0), 100):
            assert ref == src[::-1]

    def test_sort_example(self):
        s = spec(kind="sort-tokens")
        assert C.transform(s, ["t002", "t000", "t001"]) == ["t000", "t001", "t002"]

    def test_cipher_is_a_bijection(self):
        s = spec(kind="substitution-cipher", noise_rate=0.0)
        table = {}
        for src, ref in C.generate(s, 200):
            for a, b in zip(src, ref):
                assert table.setdefault(a, b) == b
        assert len(set(table.values())) == len(table)

    @pytest.mark.parametrize("kind", C.TASKS)
    def test_oracle_solves_every_pair(self, kind):
        s = spec(kind=kind, noise_rate=0.4)
        for src, ref in C.generate(s, 300):
            assert C.oracle(s, src) == ref

    @pytest.mark.parametrize("kind", C.TASKS)
    def test_invariants(self, kind):
        s = spec(kind=kind)
        names = set(C.token_names(s.vocab_size))
        for src, ref in C.generate(s, 200):
            assert ref and set(ref) <= names and set(src) <= names
            assert s.min_len <= len(ref) <= s.max_len
            assert all(a != b for a, b in zip(ref, ref[1:])) or kind == "sort-tokens"

    def test_noise_only_duplicates_source_tokens(self):
        s = spec(noise_rate=0.45)
        clean = C.generate(spec(noise_rate=0.0), 50)
        noisy = C.generate(s, 50)
        for (src, ref) in noisy:
            collapsed = C._collapse_runs(src)
            assert collapsed == ref[::-1]
            assert len(src) >= len(collapsed)
        assert any(len(s_) > len(r) for s_, r in noisy)
        assert clean.sources != noisy.sources

    def test_n_must_be_positive(self):
        with pytest.raises(ContractViolation):
            C.generate(spec(), 0)


class TestSplit:
    def test_fractions_and_determinism(self):
        c = C.generate(spec(), 2000)
        parts = C.split(c)
        sizes = {k: len(v) for k, v in parts.items()}
        assert sum(sizes.values()) == 2000
        assert 0.75 < sizes["train"] / 2000 < 0.85
        assert C.split(c)["dev"].pairs == parts["dev"].pairs
        assert [C.split_of(i) for i in range(20)] == [C.split_of(i) for i in range(20)]


class TestPersistence:
    def test_round_trip(self, tmp_path):
        c = C.generate(spec(), 1000)
        path = tmp_path / "c.jsonl"
        C.save(c, path)
        assert C.load(path).pairs == c.pairs
        assert len(path.read_text().splitlines()) == 1000

    def test_fixture(self, tmp_path):
        path = tmp_path / "fix.jsonl"
        path.write_text('{"src": ["x", "y"], "ref": ["y", "x"]}\n{"src": ["z"], "ref": ["z", "z"]}\n')
        assert C.load(path).pairs == [(["x", "y"], ["y", "x"]), (["z"], ["z", "z"])]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(C.CorpusFormatError, match="empty"):
            C.load(path)

    @pytest.mark.parametrize(
        "bad", ["not json", '{"src": ["a"]}', '{"src": "a", "ref": ["b"]}', '{"src": ["a"], "ref": []}', '{"src": [1], "ref": ["b"]}']
    )
    def test_malformed_line_reports_line_number(self, tmp_path, bad):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"src": ["a"], "ref": ["a"]}) + "\n" + bad + "\n")
        with pytest.raises(C.CorpusFormatError, match=":2:"):
            C.load(path)


class TestVocab:
    def test_all_tokens_fit(self):
        c = C.generate(spec(), 300)
        v = C.build_vocab(c, 100)
        for src, ref in c:
            assert v.unk_id not in v.encode(src + ref)

    def test_rare_tokens_become_unk(self):
        pairs = [(["a", "a", "b"], ["c"]), (["a"], ["b"])]
        v = C.build_vocab(pairs, len(RESERVED) + 2)
        assert v.itos[len(RESERVED) :] == ["a", "b"]
        assert v.encode(["c"]) == [v.unk_id]

    def test_ties_lexicographic(self):
        v = C.build_vocab([(["z", "y"], ["x", "w"])], 100)
        assert v.itos[len(RESERVED) :] == ["w", "x", "y", "z"]

    def test_reserved_ids_stable(self):
        v = C.build_vocab([(["q"], ["r"])], 100)
        assert v.itos[:5] == list(RESERVED)
        assert (v.pad_id, v.sos_id, v.eos_id, v.unk_id, v.align_id) == (0, 1, 2, 3, 4)

    def test_save_load(self, tmp_path):
        v = Vocabulary(["b", "a"])
        v.save(tmp_path / "v.txt")
        assert Vocabulary.load(tmp_path / "v.txt") == v

    def test_load_rejects_missing_reserved(self, tmp_path):
        (tmp_path / "v.txt").write_text("a\nb\n")
        with pytest.raises(ContractViolation):
            Vocabulary.load(tmp_path / "v.txt")

    def test_encode_decode(self):
        v = Vocabulary(["a", "b"])
        assert v.decode(v.encode(["a", "b"], wrap=True)) == ["<s>", "a", "b", "</s>"]
        with pytest.raises(ContractViolation):
            v.decode([99])

    @given(st.lists(st.sampled_from(["a", "b", "c"]), max_size=8))
    def test_encode_in_vocab_round_trip(self, toks):
        v = Vocabulary(["a", "b", "c"])
        assert v.decode(v.encode(toks)) == toks
