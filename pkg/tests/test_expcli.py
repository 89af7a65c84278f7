import json
import subprocess
import sys

import numpy as np
import pytest

from langevin_lab.exceptions import ConfigInvalid, MissingData, NoOverlap
from langevin_lab.expcli import (catalog_config, catalog_names, compare_runs, config_hash,
                                 emit_plots, load_config, parse_config, run_experiment)
from langevin_lab.expcli.cli import main
from langevin_lab.expcli.runner import RunManifest, sha256_file


def _ou(**over):
    cfg = {
        "name": "small_ou", "kind": "langevin", "seed": 1,
        "objective": {"type": "squared_norm", "dim": 1},
        "sim": {"sigma": 0.2, "dt": 0.01, "t_final": 1.0, "n_paths": 500,
                "record_times": [0.0, 0.5, 1.0]},
        "init": {"kind": "point", "w0": [1.0]},
        "bounds": {"decay_upper": True},
    }
    for k, v in over.items():
        cfg[k] = v
    return cfg


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("LANGEVIN_LAB_OUTPUT_ROOT", str(tmp_path / "runs"))
    return tmp_path / "runs"


class TestConfig:
    def test_hash_ignores_key_order(self):
        a = _ou()
        b = dict(reversed(list(a.items())))
        b["sim"] = dict(reversed(list(a["sim"].items())))
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(_ou(seed=2))

    def test_admissibility_rule(self):
        cfg = _ou(certificate={"ell1": 1.0, "ell2": 10.0, "ell3": 1.0})
        with pytest.raises(ConfigInvalid) as info:
            parse_config(cfg)
        assert info.value.path == "certificate"
        assert "ell1 > sigma*ell2" in info.value.reason

    @pytest.mark.parametrize("mutate,path", [
        (lambda c: c["sim"].pop("dt"), "sim.dt"),
        (lambda c: c["sim"].update(dt=-1.0), "sim.dt"),
        (lambda c: c["sim"].update(n_paths=1.5), "sim.n_paths"),
        (lambda c: c["init"].update(w0=[1.0, 2.0]), "init.w0"),
        (lambda c: c["sim"].update(typo=1), "sim.typo"),
        (lambda c: c.update(kind="nope"), "kind"),
        (lambda c: c["objective"].update(type="quadratic", A=[[0.0]]), "objective.A"),
        (lambda c: c["sim"].update(record_times=[0.5, 0.2]), "sim.record_times"),
    ])
    def test_fail_fast_paths(self, mutate, path):
        cfg = _ou()
        mutate(cfg)
        with pytest.raises(ConfigInvalid) as info:
            parse_config(cfg)
        assert info.value.path == path

    def test_no_outputs_on_invalid(self, out_root, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text('name = "x"\nkind = "langevin"\n')
        assert main(["run", str(bad)]) == 2
        assert not out_root.exists() or not any(out_root.iterdir())

    def test_toml_errors(self, tmp_path):
        (tmp_path / "broken.toml").write_text("name = ")
        with pytest.raises(ConfigInvalid):
            load_config(tmp_path / "broken.toml")
        with pytest.raises(ConfigInvalid):
            load_config(tmp_path / "missing.toml")

    def test_catalog_entries_validate(self):
        names = catalog_names()
        assert set(names) == {"ou_identity", "two_phase_quadratic", "nonintegrable_flat",
                              "gibbs_convergence_1d", "local_pl_nn", "sgd_vs_langevin"}
        for n in names:
            assert catalog_config(n).name == n


class TestRun:
    def test_manifest_complete_and_reproducible(self, out_root):
        cfg = parse_config(_ou())
        m1 = run_experiment(cfg)
        files = {p.relative_to(m1.directory).as_posix()
                 for p in (out_root / "small_ou").rglob("*") if p.is_file()}
        assert files - {"manifest.json"} == set(m1.files)
        for name, digest in m1.files.items():
            assert sha256_file(out_root / "small_ou" / name) == digest
        m2 = run_experiment(cfg)
        assert m1.files == m2.files
        m3 = run_experiment(cfg, n_jobs=2)
        assert m3.files == m1.files
        loaded = RunManifest.load(out_root / "small_ou")
        assert loaded.config_hash == cfg.config_hash()
        cols, arr = loaded.read_csv("observables.csv")
        assert cols[:3] == ["t", "gap_mean", "gap_stderr"] and "bound_decay_upper" in cols

    def test_decay_exceedance_flagged_not_fatal(self, out_root):
        m = run_experiment(parse_config(_ou()))
        assert m.summary["decay_exceedances"] == 0 and m.summary["decay_flag"] is None
        # overstated contraction rate: the curve drops below the simulated gap
        m = run_experiment(parse_config(_ou(name="fast", certificate={"ell1": 40.0, "ell3": 2.0})))
        assert m.status == "ok"
        assert m.summary["decay_exceedances"] > 0 and "t=" in m.summary["decay_flag"]

    def test_fp_columns(self, out_root):
        cfg = parse_config({
            "name": "fp", "kind": "fokker_planck",
            "objective": {"type": "squared_norm", "dim": 1},
            "grid": {"bounds": [[-4.0, 4.0]], "n_cells": 64},
            "pde": {"sigma": 1.0, "dt": 0.01, "record_times": [0.1, 1.0],
                    "phi0": {"kind": "gaussian", "center": [1.0], "width": 0.5}},
        })
        m = run_experiment(cfg)
        cols, arr = m.read_csv("fp_norms.csv")
        assert cols == ["t", "phi_l2_pi", "dirichlet_pi", "fk2_norm", "fk3_norm",
                        "mass_window", "bound_dirichlet", "bound_k2", "bound_k3"]
        assert arr.shape == (3, 9)
        assert {"phi_final.llab", "phi_final.nodes.llab"} <= set(m.files)

    def test_numerical_failure_exit_code(self, out_root, tmp_path):
        cfg = tmp_path / "div.toml"
        cfg.write_text('name = "div"\nkind = "langevin"\n'
                       '[objective]\ntype = "squared_norm"\ndim = 1\n'
                       '[sim]\nsigma = 0.0\ndt = 1.5\nt_final = 150.0\nn_paths = 2\n'
                       '[init]\nkind = "point"\nw0 = [1.0]\n')
        assert main(["run", str(cfg)]) == 3
        m = RunManifest.load(out_root / "div")
        assert m.status == "numerical_failure" and "error.json" in m.files


class TestPlotsAndCompare:
    def test_plots(self, out_root):
        m = run_experiment(parse_config(_ou()))
        paths = emit_plots(m)
        assert [p.name for p in paths] == ["gap_vs_bound.py"]
        assert "plots/gap_vs_bound.py" in RunManifest.load(m.directory).files
        text = paths[0].read_text()
        assert "observables.csv" in text and str(out_root) not in text
        pytest.importorskip("matplotlib")
        subprocess.run([sys.executable, str(paths[0])], check=True, cwd="/")
        assert (paths[0].parent / "gap_vs_bound.svg").exists()

    def test_missing_column(self, out_root):
        m = run_experiment(parse_config(_ou()))
        p = out_root / "small_ou" / "observables.csv"
        lines = p.read_text().splitlines()
        p.write_text("\n".join(l.replace("gap_mean", "other") for l in lines) + "\n")
        with pytest.raises(MissingData, match="gap_mean"):
            emit_plots(m)

    def test_sigma_sweep(self, out_root):
        ms = []
        for s in (0.05, 0.1, 0.2):
            c = _ou(name=f"ou_{s}")
            c["sim"] = dict(c["sim"], sigma=s, t_final=3.0, n_paths=4000,
                            record_times=[0.0, 3.0])
            ms.append(run_experiment(parse_config(c)))
        cols, rows = compare_runs([m.path for m in ms])
        assert cols[:4] == ["run", "sigma", "dt", "n_paths"]
        i = cols.index("gap_final_over_sigma")
        j, k = cols.index("gap_final_mean"), cols.index("gap_final_stderr")
        # plateau sigma*ell3/ell1 = sigma/2
        for row in rows:
            assert abs(row[j] - row[1] / 2) <= 3 * row[k] + 5 * 0.01
            assert abs(row[i] - 0.5) <= (3 * row[k] + 0.05) / row[1]

    def test_single_manifest(self, out_root):
        m = run_experiment(parse_config(_ou()))
        with pytest.raises(NoOverlap):
            compare_runs([m])
        assert main(["compare", str(m.path)]) == 2


def test_cli_verbs(out_root, capsys):
    assert main(["catalog", "list"]) == 0
    assert "ou_identity" in capsys.readouterr().out
    assert main(["catalog", "run", "nope"]) == 2


def test_module_entry_point(out_root):
    r = subprocess.run([sys.executable, "-m", "langevin_lab.expcli", "catalog", "list"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "gibbs_convergence_1d" in r.stdout
