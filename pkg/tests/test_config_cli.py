import json

import pytest

from rewriter_evaluator import corpus
from rewriter_evaluator.cli import main
from rewriter_evaluator.config import ConfigError, RunConfig
from rewriter_evaluator.experiment import ExperimentSpec, apply_variant, experiment_data, load_for_translation
from rewriter_evaluator.inference import parse_line
from rewriter_evaluator.pgd import read_metrics
from rewriter_evaluator.vocab import Vocabulary


class TestRunConfig:
    def test_round_trip(self):
        cfg = RunConfig(backbone="transformer-mini", copy=False, max_samples=100, patience=None, rho="fixed:0.1")
        assert RunConfig.from_text(cfg.to_text()) == cfg

    def test_comments_and_blank_lines(self):
        cfg = RunConfig.from_text("# run\n\nhidden = 8   # small\nshare=false\n")
        assert (cfg.hidden, cfg.share) == (8, False)

    @pytest.mark.parametrize(
        "text",
        ["colour = red", "hidden", "hidden = x", "backbone = lstm", "hidden = 7", "rho = linear", "share = maybe", "delta = -1"],
    )
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            RunConfig.from_text(text)

    def test_paths_resolve_against_config_dir(self, tmp_path):
        (tmp_path / "c.cfg").write_text("train = data/t.jsonl\nout_dir = /abs/run\n")
        cfg = RunConfig.load(tmp_path / "c.cfg")
        assert cfg.train == str(tmp_path / "data" / "t.jsonl")
        assert cfg.out_dir == "/abs/run"

    def test_variant(self):
        v = apply_variant(RunConfig(), "copy=false,max_k=2")
        assert (v.copy, v.max_k) == (False, 2)
        assert v.trainer_config().max_passes == 2


def cli(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert cli(["gen", "--n", "120", "--vocab-size", "8", "--max-len", "5", "--seed", "3", "--split-dir", str(d)]) == 0
    (d / "run.cfg").write_text(
        "hidden = 8\nbatch_size = 4\nmax_epochs = 2\npatience = none\nbeam_size = 1\n"
        "train = train.jsonl\ndev = dev.jsonl\ntest = test.jsonl\nout_dir = out\n"
    )
    assert cli(["train", str(d / "run.cfg")]) == 0
    return d


class TestGen:
    def test_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert cli(["gen", "--n", "30", "--seed", "9", "--out", str(tmp_path / f"{name}.jsonl")]) == 0
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    @pytest.mark.parametrize("args", [["--vocab-size", "3"], ["--noise", "0.7"], ["--n", "0"], ["--task", "nope"]])
    def test_invalid_exits_2(self, tmp_path, args):
        argv = ["gen", "--n", "5", "--out", str(tmp_path / "x.jsonl")] + args
        with pytest.raises(SystemExit) as e:
            cli(argv)
        assert e.value.code == 2


class TestTrainTranslate:
    def test_outputs(self, trained):
        out = trained / "out"
        for name in ("vocab.txt", "metrics.csv", "model.ckpt", "run.json", "checkpoints/last.ckpt"):
            assert (out / name).exists(), name
        assert len(read_metrics(out / "metrics.csv")) == 2
        assert set(json.loads((out / "run.json").read_text())["seeds"]) == {"data", "init", "shuffle"}

    def test_translate_lines(self, trained, capsys):
        code = cli(["translate", trained / "out/model.ckpt", trained / "test.jsonl", "--beam", "1", "--delta", "0.01"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == len(corpus.load(trained / "test.jsonl"))
        for line in lines:
            final, reason, k, qs = parse_line(line)
            assert reason in ("threshold", "max-passes")
            assert 1 <= k <= len(qs) <= 4

    def test_fixed_one_equals_single_pass(self, trained, tmp_path):
        out = tmp_path / "t.txt"
        argv = ["translate", trained / "out/model.ckpt", trained / "test.jsonl", "--policy", "fixed:1", "--beam", "1"]
        assert cli(argv + ["--out", out]) == 0
        model = load_for_translation(trained / "out/model.ckpt")
        xs = corpus.load(trained / "test.jsonl").sources
        want = [h.tokens for h in model.greedy_decode(xs, [[] for _ in xs])]
        assert [parse_line(l)[0] for l in out.read_text().splitlines()] == want

    def test_oracle_without_refs_exits_2(self, trained):
        with pytest.raises(SystemExit) as e:
            cli(["translate", trained / "out/model.ckpt", trained / "test.jsonl", "--policy", "oracle"])
        assert e.value.code == 2

    def test_bad_policy_exits_2(self, trained):
        with pytest.raises(SystemExit) as e:
            cli(["translate", trained / "out/model.ckpt", trained / "test.jsonl", "--policy", "fixed:7"])
        assert e.value.code == 2

    def test_vocab_mismatch(self, trained, tmp_path, capsys):
        Vocabulary(["only"]).save(tmp_path / "v.txt")
        code = cli(["translate", trained / "out/model.ckpt", trained / "test.jsonl", "--vocab", tmp_path / "v.txt"])
        assert code == 1
        assert "does not match" in capsys.readouterr().err

    def test_bleu_command(self, trained, tmp_path, capsys):
        out = tmp_path / "t.txt"
        cli(["translate", trained / "out/model.ckpt", trained / "test.jsonl", "--policy", "fixed:1", "--beam", "1", "--out", out])
        capsys.readouterr()
        assert cli(["bleu", out, trained / "test.jsonl"]) == 0
        assert capsys.readouterr().out.startswith("BLEU ")

    def test_resume(self, trained):
        # already finished; resuming is a no-op that keeps the model
        assert cli(["train", trained / "run.cfg", "--resume"]) == 0

    def test_missing_corpus(self, tmp_path):
        (tmp_path / "c.cfg").write_text("train = nope.jsonl\n")
        assert cli(["train", tmp_path / "c.cfg"]) == 1

    def test_ablate(self, trained, tmp_path, capsys):
        out = tmp_path / "abl.csv"
        assert cli(["ablate", trained / "run.cfg", "--variants", "delta=0.1", "--out", out]) == 0
        rows = out.read_text().splitlines()
        assert rows[0].startswith("variant,") and len(rows) == 3


class TestExperimentData:
    @pytest.mark.parametrize("n_train,n_dev,n_test", [(2000, 200, 200), (100, 20, 30), (16, 5, 5)])
    def test_split_sizes(self, n_train, n_dev, n_test):
        spec = ExperimentSpec(n_train=n_train, n_dev=n_dev, n_test=n_test)
        data = experiment_data(spec, 0)
        assert [len(data[k]) for k in ("train", "dev", "test")] == [n_train, n_dev, n_test]
