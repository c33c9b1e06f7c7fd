import json

from biascube.cli import main, parse_config_file


def run(args):
    return main(args)


def records_of(path):
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["record"] == "header"
    return header, [json.loads(line) for line in lines[1:]]


SCHEMA = {"command", "params", "lhs", "rhs", "ratio", "error_estimate", "pass", "notes"}


class TestDispatch:
    def test_quadrature_selftest(self, tmp_path):
        out = tmp_path / "r.jsonl"
        assert run(["quadrature-selftest", "--out", str(out)]) == 0
        header, recs = records_of(out)
        assert header["command"] == "quadrature-selftest"
        assert len(recs) == 4
        for rec in recs:
            assert set(rec) == SCHEMA and rec["pass"]

    def test_verify_theorem(self, tmp_path):
        out = tmp_path / "r.jsonl"
        code = run(["verify-theorem", "--n", "3", "--d", "2", "--alpha", "0.1",
                    "--p", "1.5", "--seed", "7", "--out", str(out)])
        assert code == 0
        _, recs = records_of(out)
        assert recs[0]["ratio"] <= 1 + 1e-6 and recs[0]["pass"]

    def test_verify_corollary(self, tmp_path):
        out = tmp_path / "r.jsonl"
        assert run(["verify-corollary", "--n", "4", "--alpha", "0.25", "--p", "2",
                    "--count", "3", "--seed", "3", "--out", str(out)]) == 0

    def test_verify_identities(self, tmp_path):
        out = tmp_path / "r.jsonl"
        assert run(["verify-identities", "--count", "5", "--n", "4", "--seed", "1",
                    "--out", str(out)]) == 0
        _, recs = records_of(out)
        names = {r["params"]["identity"] for r in recs}
        assert "dirichlet_identity" in names and "heat_derivative_identity" in names

    def test_verify_delta_bound(self, tmp_path):
        out = tmp_path / "r.jsonl"
        assert run(["verify-delta-bound", "--alpha-grid", "0.05,0.2,0.45",
                    "--t-grid", "0.1,1,5", "--out", str(out)]) == 0

    def test_sharpness_scan_with_csv(self, tmp_path):
        out, csv_path = tmp_path / "r.jsonl", tmp_path / "scan.csv"
        assert run(["sharpness-scan", "--p", "1.5", "--alpha-grid", "0.01,0.1,0.3",
                    "--out", str(out), "--csv", str(csv_path)]) == 0
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "alpha,p,lhs,rhs,ratio"
        assert len(lines) == 4

    def test_extremal_search(self, tmp_path):
        out = tmp_path / "r.jsonl"
        assert run(["extremal-search", "--n", "2", "--d", "2", "--alpha", "0.1",
                    "--p", "1.5", "--budget", "300", "--seed", "5",
                    "--out", str(out)]) == 0

    def test_binomial_limit(self, tmp_path):
        out, csv_path = tmp_path / "r.jsonl", tmp_path / "tv.csv"
        assert run(["binomial-limit", "--n-list", "4,16,64", "--t-grid", "1",
                    "--tv-threshold", "0.2", "--out", str(out),
                    "--csv", str(csv_path)]) == 0
        assert csv_path.read_text().splitlines()[0] == "n,t,tv_distance"

    def test_scaling_limit(self, tmp_path):
        out = tmp_path / "r.jsonl"
        assert run(["scaling-limit", "--n-list", "4,8", "--seed", "2",
                    "--out", str(out)]) == 0

    def test_distortion_builtin(self, tmp_path):
        out, csv_path = tmp_path / "r.jsonl", tmp_path / "d.csv"
        assert run(["distortion", "--n-list", "8,32", "--out", str(out),
                    "--csv", str(csv_path)]) == 0
        assert csv_path.read_text().splitlines()[0].startswith("n,alpha,q,lipschitz")

    def test_distortion_manifest(self, tmp_path, rng):
        from biascube.cube import random_cube_function
        from biascube.io import save_cube_function

        save_cube_function(random_cube_function(4, 2, rng), tmp_path / "emb.txt")
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps({"entries": [
            {"file": "emb.txt", "q": 2, "p": 2, "T": 1, "alphas": [0.1, 0.25]}
        ]}))
        out = tmp_path / "r.jsonl"
        assert run(["distortion", "--manifest", str(manifest), "--out", str(out)]) == 0
        _, recs = records_of(out)
        assert len(recs) == 2

    def test_poisson_verify_small(self, tmp_path):
        out = tmp_path / "r.jsonl"
        assert run(["poisson-verify", "--count", "4", "--theorem-count", "1",
                    "--samples", "4000", "--seed", "9", "--out", str(out)]) == 0


class TestExitCodes:
    def test_contract_violation_exits_one(self, tmp_path, capsys):
        # an absurd TV threshold makes the final ladder record fail
        out = tmp_path / "r.jsonl"
        code = run(["binomial-limit", "--n-list", "4,16", "--t-grid", "1",
                    "--tv-threshold", "1e-9", "--out", str(out)])
        assert code == 1
        assert "contract violation" in capsys.readouterr().err
        _, recs = records_of(out)
        assert any(not r["pass"] for r in recs)


class TestValidation:
    def test_bad_alpha_named(self, tmp_path, capsys):
        assert run(["verify-theorem", "--alpha", "1.2", "--seed", "1"]) == 2
        assert "invalid alpha" in capsys.readouterr().err

    def test_seed_mandatory_for_sampling(self, capsys):
        assert run(["verify-theorem", "--n", "2"]) == 2
        assert "invalid seed" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert run([]) == 2
        assert "invalid command" in capsys.readouterr().err

    def test_bad_mode(self, capsys):
        assert run(["verify-theorem", "--mode", "magic", "--seed", "1"]) == 2
        assert "invalid mode" in capsys.readouterr().err


class TestConfig:
    def test_config_file_supplies_command(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# demo sweep\ncommand = verify-theorem\nn = 3\nalpha = 0.25\n"
            "p = 1\nseed = 11\n"
        )
        out = tmp_path / "r.jsonl"
        assert run(["verify-theorem", "--config", str(cfg), "--out", str(out)]) == 0
        _, recs = records_of(out)
        assert recs[0]["params"]["alpha"] == 0.25

    def test_flags_win_over_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("command = verify-theorem\nn = 3\nalpha = 0.25\nseed = 11\n")
        out = tmp_path / "r.jsonl"
        assert run(["verify-theorem", "--config", str(cfg), "--alpha", "0.1",
                    "--out", str(out)]) == 0
        _, recs = records_of(out)
        assert recs[0]["params"]["alpha"] == 0.1

    def test_malformed_config(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("command verify-theorem\n")
        assert run(["verify-theorem", "--config", str(cfg)]) == 2
        assert "invalid config" in capsys.readouterr().err

    def test_parse_config_types(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("alpha = 0.3  # bias\nn-list = 4,8\n")
        parsed = parse_config_file(cfg)
        assert parsed == {"alpha": "0.3", "n_list": "4,8"}


class TestDeterminism:
    def test_mc_records_identical_across_runs(self, tmp_path):
        args = ["verify-theorem", "--n", "3", "--mode", "mc", "--samples", "4000",
                "--seed", "21", "--count", "2"]
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run(args + ["--out", str(out1)]) == 0
        assert run(args + ["--out", str(out2)]) == 0
        body1 = out1.read_text().splitlines()[1:]
        body2 = out2.read_text().splitlines()[1:]
        assert body1 == body2

    def test_poisson_mc_deterministic(self, tmp_path):
        args = ["poisson-verify", "--count", "2", "--theorem-count", "1",
                "--samples", "2000", "--seed", "5"]
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run(args + ["--out", str(out1)]) == 0
        assert run(args + ["--out", str(out2)]) == 0
        assert out1.read_text().splitlines()[1:] == out2.read_text().splitlines()[1:]

    def test_header_isolates_timestamp(self, tmp_path):
        out = tmp_path / "r.jsonl"
        run(["quadrature-selftest", "--out", str(out)])
        header, recs = records_of(out)
        assert "timestamp" in header
        assert all("timestamp" not in r for r in recs)
