import json

import pandas as pd
import pytest

from ratingcohorts import cli
from ratingcohorts.errors import ConfigError
from ratingcohorts.pipeline import RunConfig, StageError, derive_seed, load_config, run_pipeline

HALF_STARS = "1.0,1.5,2.0,2.5,3.0,3.5,4.0,4.5,5.0"
EXPECTED = {
    "reviews.csv", "ingest.json", "user_stats.csv", "business_stats.csv", "moments.json",
    "segments.csv", "thresholds.json", "cohort_summary.json", "table1.json", "table1.md",
    "figure3.csv", "figure3_fit.json", "universe.csv", "figure4.csv", "figure1_panel1.csv",
    "figure1_panel2.csv", "figure2_panel1.csv", "figure2_panel2.csv",
}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out", str(out), "--users", "2000", "--restaurants", "60",
                     "--ratings-per-user", "20", "--seed", "4"]) == 0
    return out


def small_config(synth_dir, out, **kw):
    base = dict(reviews=str(synth_dir / "reviews.csv"), format="csv", out=str(out),
                allowed_scores=tuple(float(x) for x in HALF_STARS.split(",")), replicates=20)
    base.update(kw)
    return RunConfig(**base)


class TestRunPipeline:
    def test_manifest_lists_artifacts(self, synth_dir, tmp_path):
        manifest = run_pipeline(small_config(synth_dir, tmp_path))
        assert manifest["complete"] is True
        assert set(manifest["outputs"]) == EXPECTED
        for name in EXPECTED:
            assert (tmp_path / name).exists()
        assert [s["stage"] for s in manifest["stages"]] == ["ingest", "stats", "segment", "regress",
                                                            "bootstrap", "report"]
        assert len(manifest["inputs"]["reviews"]["sha256"]) == 64

    def test_rerun_has_identical_digests(self, synth_dir, tmp_path):
        a = run_pipeline(small_config(synth_dir, tmp_path / "a"))
        b = run_pipeline(small_config(synth_dir, tmp_path / "b"))
        assert a["outputs"] == b["outputs"]

    def test_digest_changes_with_seed(self, synth_dir, tmp_path):
        a = run_pipeline(small_config(synth_dir, tmp_path / "a"))
        b = run_pipeline(small_config(synth_dir, tmp_path / "b", seed=1))
        changed = {k for k in a["outputs"] if a["outputs"][k] != b["outputs"][k]}
        assert changed == {"figure4.csv"}

    def test_loo_adds_table(self, synth_dir, tmp_path):
        manifest = run_pipeline(small_config(synth_dir, tmp_path, loo=True))
        assert {"table1_loo.json", "table1_loo.md"} <= set(manifest["outputs"])

    def test_missing_input_is_stage_tagged(self, tmp_path):
        cfg = RunConfig(reviews=str(tmp_path / "nope.csv"), format="csv", out=str(tmp_path / "o"))
        with pytest.raises(StageError) as err:
            run_pipeline(cfg)
        assert err.value.stage == "ingest"
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["complete"] is False and manifest["failed_stage"] == "ingest"

    def test_empty_universe_fails_at_bootstrap(self, synth_dir, tmp_path):
        with pytest.raises(StageError) as err:
            run_pipeline(small_config(synth_dir, tmp_path, min_total=10**6))
        assert err.value.stage == "bootstrap"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert "table1.json" in manifest["outputs"]

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            RunConfig(reviews="x", sample_size=0).validate()

    def test_json_inputs_with_business_filter(self, data_dir, tmp_path):
        # the tiny fixture is too small for moments, so only ingest must succeed
        cfg = RunConfig(reviews=str(data_dir / "reviews_3lines.jsonl"),
                        businesses=str(data_dir / "businesses_5.jsonl"), out=str(tmp_path))
        with pytest.raises(StageError) as err:
            run_pipeline(cfg)
        assert err.value.stage == "stats"
        ingest = json.loads((tmp_path / "ingest.json").read_text())
        assert ingest["restaurant_reviews"] == 2


class TestCli:
    def test_usage_error(self, capsys):
        assert cli.main(["bootstrap", "--cohort", "nobody"]) == cli.EXIT_USAGE
        assert cli.main([]) == cli.EXIT_USAGE

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code = cli.main(["stats", "--reviews", str(tmp_path / "absent.csv"), "--out", str(tmp_path)])
        assert code == cli.EXIT_DATA
        assert "error [" in capsys.readouterr().err

    def test_bad_config_value(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[ratingcohorts]\nreplicates = lots\n")
        assert cli.main(["run", "--config", str(ini), "--reviews", "x"]) == cli.EXIT_USAGE

    def test_subcommands(self, synth_dir, tmp_path, capsys):
        rv = ["--reviews", str(synth_dir / "reviews.csv")]
        assert cli.main(["stats", *rv, "--out", str(tmp_path / "s")]) == 0
        assert (tmp_path / "s" / "moments.json").exists()
        assert cli.main(["segment", *rv, "--out", str(tmp_path / "g")]) == 0
        thresholds = json.loads((tmp_path / "g" / "thresholds.json").read_text())
        assert thresholds["lo"] < thresholds["hi"]
        assert cli.main(["regress", *rv, "--out", str(tmp_path / "r")]) == 0
        assert "Average normalized user rating" in capsys.readouterr().out
        assert cli.main(["regress", *rv, "--level", "restaurant", "--min-count", "1",
                         "--out", str(tmp_path / "r")]) == 0
        assert (tmp_path / "r" / "figure3.csv").exists()
        assert cli.main(["bootstrap", *rv, "--cohort", "deflating", "--replicates", "5",
                         "--allowed-scores", HALF_STARS, "--out", str(tmp_path / "b")]) == 0
        fig4 = pd.read_csv(tmp_path / "b" / "figure4.csv")
        assert set(fig4.cohort) == {"deflating"}
        assert fig4.seed.iloc[0] == derive_seed(0, "bootstrap:deflating")
        assert cli.main(["report", *rv, "--out", str(tmp_path / "p")]) == 0
        assert (tmp_path / "p" / "figure2_panel2.csv").exists()

    def test_ingest_json(self, data_dir, tmp_path):
        code = cli.main(["ingest", "--reviews", str(data_dir / "reviews_3lines.jsonl"),
                         "--businesses", str(data_dir / "businesses_5.jsonl"), "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "reviews.csv").read_text().count("\n") == 3

    def test_config_file_and_flag_precedence(self, synth_dir, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text(f"[ratingcohorts]\nreviews = {synth_dir / 'reviews.csv'}\nformat = csv\n"
                       f"replicates = 7\nsample_size = 5\nallowed_scores = {HALF_STARS}\n")
        assert load_config(ini)["replicates"] == 7
        assert cli.main(["bootstrap", "--config", str(ini), "--replicates", "9",
                         "--out", str(tmp_path / "o")]) == 0
        fig4 = pd.read_csv(tmp_path / "o" / "figure4.csv")
        assert (fig4.R == 9).all()

    def test_config_inline_comments(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[ratingcohorts]\npercentile_convention = nearest-rank  ; or linear\n"
                       "allowed_scores = 3.5,4.0  # two classes\nloo = true\n")
        cfg = RunConfig(reviews="x", **load_config(ini))
        cfg.validate()
        assert cfg.percentile_convention == "nearest-rank"
        assert cfg.allowed_scores == (3.5, 4.0) and cfg.loo is True

    def test_synth_rerun_identical(self, synth_dir, tmp_path):
        assert cli.main(["synth", "--out", str(tmp_path), "--users", "2000", "--restaurants", "60",
                         "--ratings-per-user", "20", "--seed", "4"]) == 0
        for name in ("reviews.csv", "latents.json"):
            assert (tmp_path / name).read_bytes() == (synth_dir / name).read_bytes()


def test_empty_histogram_group_writes_header(tmp_path):
    # identical raters leave both cohorts empty and no restaurant in either stratum
    rows = ["user_id,business_id,stars"] + [f"u{u},b{b},3" for u in range(6) for b in range(5)]
    (tmp_path / "flat.csv").write_text("\n".join(rows) + "\n")
    assert cli.main(["report", "--reviews", str(tmp_path / "flat.csv"), "--out", str(tmp_path / "o")]) == 0
    for name, header in [("figure2_panel1.csv", "cohort,stars,count"), ("figure2_panel2.csv", "cohort,stars,count"),
                         ("figure1_panel1.csv", "stratum,yelp_score,count")]:
        assert (tmp_path / "o" / name).read_text().splitlines() == [header]
    assert len((tmp_path / "o" / "figure1_panel2.csv").read_text().splitlines()) > 1
