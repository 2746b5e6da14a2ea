import json

import pytest

from expertgate.cli import main
from expertgate.synth import SyntheticTaskSpec, spec_to_json


def write_spec(path, name, seed, **overrides):
    spec = SyntheticTaskSpec(name=name, kind=overrides.pop("kind", "affine-subspace"),
                             intrinsic_dim=overrides.pop("intrinsic_dim", 3),
                             ambient_dim=overrides.pop("ambient_dim", 24),
                             classes=overrides.pop("classes", 3),
                             samples=overrides.pop("samples", 300),
                             noise=overrides.pop("noise", 0.2), seed=seed, **overrides)
    spec_to_json(spec, path)
    return path


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    specs = [write_spec(root / f"t{i}.json", f"t{i}", seed=20 + i) for i in range(2)]
    data = []
    for i, spec in enumerate(specs):
        out = root / f"t{i}.egd1"
        assert main(["gen", "--spec", str(spec), "--out", str(out)]) == 0
        data.append(out)
    return root, specs, data


@pytest.fixture(scope="module")
def store(workdir):
    root, _, data = workdir
    store = root / "store"
    for i, d in enumerate(data):
        code = main(["learn", str(d), "--name", f"t{i}", "--store", str(store),
                     "--code-size", "6", "--lr", "0.05", "--epochs", "40",
                     "--seed", str(i)])
        assert code == 0
    return store


class TestGen:
    def test_csv_output(self, workdir, tmp_path):
        root, specs, _ = workdir
        out = tmp_path / "d.csv"
        assert main(["gen", "--spec", str(specs[0]), "--out", str(out)]) == 0
        header = out.read_text().splitlines()[0]
        assert header == ",".join([f"f{j}" for j in range(24)] + ["label"])

    def test_deterministic_bytes(self, workdir, tmp_path):
        root, specs, data = workdir
        again = tmp_path / "again.egd1"
        assert main(["gen", "--spec", str(specs[0]), "--out", str(again)]) == 0
        assert again.read_bytes() == data[0].read_bytes()

    def test_bad_spec_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["gen", "--spec", str(bad), "--out", str(tmp_path / "x.egd1")]) == 2


class TestLearn:
    def test_duplicate_name_exit_3(self, workdir, store):
        root, _, data = workdir
        code = main(["learn", str(data[0]), "--name", "t0", "--store", str(store),
                     "--epochs", "1"])
        assert code == 3

    def test_overcomplete_code_exit_3(self, workdir, tmp_path):
        root, _, data = workdir
        code = main(["learn", str(data[0]), "--name", "x", "--store",
                     str(tmp_path / "s"), "--code-size", "24", "--epochs", "1"])
        assert code == 3

    def test_bad_dataset_exit_2(self, tmp_path):
        bad = tmp_path / "bad.egd1"
        bad.write_bytes(b"EGD1" + b"\0" * 4)
        code = main(["learn", str(bad), "--name", "x", "--store", str(tmp_path / "s")])
        assert code == 2


class TestInfer:
    def test_report_files(self, workdir, store, tmp_path):
        root, _, data = workdir
        out = tmp_path / "routing.csv"
        code = main(["infer", str(data[1]), "--store", str(store),
                     "--out", str(out), "--multi"])
        assert code == 0
        assert out.exists() and out.with_suffix(".png").exists()
        header = out.read_text().splitlines()[0]
        assert header == "sample_id,er_t0,er_t1,p_t0,p_t1,selected,activated"

    def test_byte_identical_report(self, workdir, store, tmp_path):
        root, _, data = workdir
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["infer", str(data[0]), "--store", str(store),
                         "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_store_exit_4(self, workdir, tmp_path):
        root, _, data = workdir
        assert main(["infer", str(data[0]), "--store", str(tmp_path / "none")]) == 4

    def test_deleted_weight_file_exit_4(self, workdir, store, tmp_path):
        import shutil
        root, _, data = workdir
        broken = tmp_path / "broken"
        shutil.copytree(store, broken)
        (broken / "t0.gate.egw").unlink()
        assert main(["infer", str(data[0]), "--store", str(broken)]) == 4


class TestRelatedness:
    def test_tsv_output(self, workdir, store, capsys):
        root, _, data = workdir
        code = main(["relatedness", str(data[0]), "--store", str(store),
                     "--seed", "1"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "prior_task\tEr_k\tEr_a\trel"
        assert len(lines) == 4  # header + 2 priors + chosen line
        assert lines[-1].startswith("chosen\t")


class TestBench:
    def test_end_to_end_report(self, tmp_path, capsys):
        specs = ",".join(str(write_spec(tmp_path / f"b{i}.json", f"b{i}", seed=60 + i,
                                        samples=400)) for i in range(2))
        out = tmp_path / "bench.csv"
        code = main(["bench", "--tasks", specs, "--store", str(tmp_path / "bs"),
                     "--out", str(out), "--epochs", "25", "--sweep-sizes", "10,50"])
        assert code == 0
        text = out.read_text()
        assert "ExpertGate" in text and "GateSelection" in text
        assert "DiscriminativeSelection@10" in text
        for suffix in ("_methods.png", "_sweep.png", "_confusion.png"):
            assert out.with_name(out.stem + suffix).exists()
