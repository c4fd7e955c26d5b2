"""End-to-end CLI pipelines: smoke runs, exit codes, reproducibility."""

import json
from pathlib import Path

import pytest

from moldae.cli import main

TRAIN_CONFIG = """
# toy run
d_model=16
n_heads=2
encoder_layers=1
decoder_layers=1
ff_width=32
max_len=32
steps=30
batch_size=8
seed=7
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus_smiles = root / "corpus.smiles"
    rc = main(["make-corpus", "--n", "120", "--seed", "3", "--output", str(corpus_smiles)])
    assert rc == 0
    config = root / "train.config"
    config.write_text(TRAIN_CONFIG)
    return root, corpus_smiles, config


def test_make_corpus_output(workspace):
    root, corpus_smiles, _ = workspace
    lines = corpus_smiles.read_text().splitlines()
    assert len(lines) == 120
    assert len(set(lines)) == 120
    assert (root / "corpus.smiles.config.txt").exists()


def test_convert_roundtrip(workspace):
    root, corpus_smiles, _ = workspace
    selfies_path = root / "corpus.selfies"
    assert main(["convert", "--input", str(corpus_smiles), "--output", str(selfies_path)]) == 0
    assert (root / "corpus.selfies.rejects").read_text() == ""
    lines = selfies_path.read_text().splitlines()
    assert len(lines) == 120 and all(l.startswith("[") for l in lines)
    back = root / "back.smiles"
    assert main(["convert", "--input", str(selfies_path), "--output", str(back),
                 "--direction", "selfies-to-smiles"]) == 0
    from moldae.canon import canonicalize
    from moldae.smiles import parse_smiles

    for a, b in zip(corpus_smiles.read_text().splitlines(), back.read_text().splitlines()):
        assert canonicalize(parse_smiles(a)) == canonicalize(parse_smiles(b))


def test_convert_empty_file(tmp_path):
    src = tmp_path / "empty.smiles"
    src.write_text("")
    out = tmp_path / "out.selfies"
    assert main(["convert", "--input", str(src), "--output", str(out)]) == 0
    assert out.read_text() == ""


def test_convert_rejects_and_lenient(tmp_path):
    src = tmp_path / "in.smiles"
    src.write_text("CCO\nnot_a_molecule\nC[O-]\n")
    out = tmp_path / "out.selfies"
    assert main(["convert", "--input", str(src), "--output", str(out)]) == 1
    rejects = (Path(str(out) + ".rejects")).read_text().splitlines()
    assert len(rejects) == 2  # syntax error + charged atom outside the alphabet
    assert rejects[0].startswith("2\t")
    lines = out.read_text().split("\n")
    assert lines[0].startswith("[") and lines[1] == "" and lines[2] == ""
    assert main(["convert", "--input", str(src), "--output", str(out), "--lenient"]) == 0


def test_convert_missing_input_is_io_error(tmp_path):
    assert main(["convert", "--input", str(tmp_path / "nope"), "--output", str(tmp_path / "o")]) == 2


@pytest.fixture(scope="module")
def trained(workspace):
    root, corpus_smiles, config = workspace
    selfies_path = root / "corpus.selfies"
    if not selfies_path.exists():
        assert main(["convert", "--input", str(corpus_smiles), "--output", str(selfies_path)]) == 0
    out_dir = root / "run"
    rc = main(["train", "--corpus", str(selfies_path), "--out-dir", str(out_dir),
               "--config", str(config)])
    assert rc == 0
    return root, out_dir, selfies_path


def test_train_outputs(trained):
    _, out_dir, _ = trained
    assert (out_dir / "checkpoint_final.bin").exists()
    assert (out_dir / "vocab.txt").exists()
    log_lines = (out_dir / "trainlog.csv").read_text().splitlines()
    assert log_lines[0] == "step,loss,masked_acc,seconds"
    assert len(log_lines) == 31
    resolved = dict(l.split("=", 1) for l in (out_dir / "config_resolved.txt").read_text().splitlines())
    assert resolved["d_model"] == "16" and resolved["steps"] == "30"


def test_train_unknown_config_key_is_config_error(workspace, tmp_path):
    root, _, _ = workspace
    selfies_path = root / "corpus.selfies"
    rc = main(["train", "--corpus", str(selfies_path), "--out-dir", str(tmp_path / "x"),
               "--set", "d_modell=16"])
    assert rc == 3


def test_generate_and_eval_gen(trained):
    root, out_dir, selfies_path = trained
    gen_dir = root / "gen"
    rc = main(["generate", "--checkpoint", str(out_dir / "checkpoint_final.bin"),
               "--vocab", str(out_dir / "vocab.txt"), "--out-dir", str(gen_dir),
               "--n", "40", "--seed", "5"])
    assert rc == 0
    raw = (gen_dir / "generated.selfies").read_text().splitlines()
    smi = (gen_dir / "generated.smiles").read_text().splitlines()
    assert len(raw) == 40 and len(smi) == 40

    eval_dir = root / "eval"
    rc = main(["eval-gen", "--generated", str(gen_dir / "generated.selfies"),
               "--training-canon", str(root / "corpus.smiles"), "--out-dir", str(eval_dir)])
    assert rc == 0
    report = json.loads((eval_dir / "generation_report.json").read_text())
    assert report["counts"]["n"] == 40
    assert 0.0 <= report["validity"] <= 1.0
    assert 0.0 <= report["intdiv1"] <= 1.0


def test_embed_matrix(trained, tmp_path):
    root, out_dir, _ = trained
    src = tmp_path / "mols.smiles"
    src.write_text("CCO\nCC\nbadsmiles\n")
    out = tmp_path / "emb.csv"
    rc = main(["embed", "--checkpoint", str(out_dir / "checkpoint_final.bin"),
               "--vocab", str(out_dir / "vocab.txt"), "--input", str(src),
               "--output", str(out), "--lenient"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert len(lines[0].split(",")) == 16
    assert lines[2] == ""
    assert Path(str(out) + ".rejects").read_text().startswith("3\t")
    # strict mode fails on rejects
    rc = main(["embed", "--checkpoint", str(out_dir / "checkpoint_final.bin"),
               "--vocab", str(out_dir / "vocab.txt"), "--input", str(src),
               "--output", str(out)])
    assert rc == 1


def test_eval_prop_pipeline(trained, tmp_path):
    from moldae.graph import heavy_atom_count
    from moldae.smiles import parse_smiles

    root, out_dir, _ = trained
    molecules = (root / "corpus.smiles").read_text().splitlines()[:60]
    csv_path = tmp_path / "data.csv"
    rows = ["smiles,y"]
    rows += [f"{s},{float(heavy_atom_count(parse_smiles(s)))}" for s in molecules]
    csv_path.write_text("\n".join(rows) + "\n")
    manifest = tmp_path / "task.manifest"
    manifest.write_text("task=regression\nsmiles=smiles\nlabels=y\nname=toy\n")
    prop_dir = root / "prop"
    rc = main(["eval-prop", "--checkpoint", str(out_dir / "checkpoint_final.bin"),
               "--vocab", str(out_dir / "vocab.txt"), "--dataset", str(csv_path),
               "--manifest", str(manifest), "--out-dir", str(prop_dir), "--seed", "1"])
    assert rc == 0
    result = json.loads((prop_dir / "property_result.json").read_text())
    assert result["metric_name"] == "rmse"
    assert result["split_seed"] == 1


def test_full_pipeline_byte_identical(tmp_path):
    """Two identical seeded runs produce byte-identical primary outputs."""
    outputs = []
    for tag in ("a", "b"):
        root = tmp_path / tag
        corpus = root / "c.smiles"
        assert main(["make-corpus", "--n", "60", "--seed", "9", "--output", str(corpus)]) == 0
        selfies_path = root / "c.selfies"
        assert main(["convert", "--input", str(corpus), "--output", str(selfies_path)]) == 0
        run = root / "run"
        assert main(["train", "--corpus", str(selfies_path), "--out-dir", str(run),
                     "--set", "d_model=16", "--set", "n_heads=2", "--set", "encoder_layers=1",
                     "--set", "decoder_layers=1", "--set", "ff_width=32", "--set", "max_len=32",
                     "--set", "steps=12", "--set", "batch_size=8", "--set", "seed=4"]) == 0
        gen = root / "gen"
        assert main(["generate", "--checkpoint", str(run / "checkpoint_final.bin"),
                     "--vocab", str(run / "vocab.txt"), "--out-dir", str(gen),
                     "--n", "25", "--seed", "2"]) == 0
        ev = root / "ev"
        assert main(["eval-gen", "--generated", str(gen / "generated.selfies"),
                     "--training-canon", str(corpus), "--out-dir", str(ev)]) == 0
        config_lines = [l for l in (run / "config_resolved.txt").read_text().splitlines()
                        if not l.startswith("corpus=")]  # path differs across tmp dirs
        outputs.append({
            "corpus": corpus.read_bytes(),
            "selfies": selfies_path.read_bytes(),
            "ckpt": (run / "checkpoint_final.bin").read_bytes(),
            "vocab": (run / "vocab.txt").read_bytes(),
            "gen_selfies": (gen / "generated.selfies").read_bytes(),
            "gen_smiles": (gen / "generated.smiles").read_bytes(),
            "report": (ev / "generation_report.json").read_bytes(),
            "config": "\n".join(config_lines),
        })
    for key in outputs[0]:
        assert outputs[0][key] == outputs[1][key], key
