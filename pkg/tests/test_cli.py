import json
import re
from pathlib import Path

import pytest

from jenga.cli import main


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def files(d: Path) -> dict[str, bytes]:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def local_refs_only(html_path: Path):
    html = html_path.read_text()
    for ref in re.findall(r'(?:src|href)="([^"]+)"', html):
        assert "/" not in ref and ":" not in ref, ref
        assert (html_path.parent / ref).is_file(), ref


def test_decompose_deterministic(tmp_path, capsys):
    assert run(["decompose", "--seed", 7, "--out", tmp_path / "a"], capsys)[0] == 0
    assert run(["decompose", "--seed", 7, "--out", tmp_path / "b"], capsys)[0] == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b
    for name in ("sequence.json", "config.json", "gallery.html", "scene.json", "initial.png"):
        assert name in a
    local_refs_only(tmp_path / "a" / "gallery.html")


def test_decompose_records_n(tmp_path, capsys):
    run(["decompose", "--seed", 3, "--n", 8, "--out", tmp_path], capsys)
    assert json.loads((tmp_path / "sequence.json").read_text())["config"]["n"] == 8
    assert json.loads((tmp_path / "config.json").read_text())["n"] == 8


def test_decompose_from_image_file(tmp_path, capsys):
    run(["decompose", "--seed", 2, "--out", tmp_path / "a"], capsys)
    code, out, _ = run(["decompose", "--image", tmp_path / "a" / "initial.png", "--out", tmp_path / "b"], capsys)
    assert code == 0
    assert json.loads(out)["terminated"] == "background_reached"


def test_missing_image_is_usage_error(tmp_path, capsys):
    code, _, err = run(["decompose", "--image", tmp_path / "none.png", "--out", tmp_path], capsys)
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["exit"] == 2 and "none.png" in payload["message"]


def test_infeasible_generation_exit_4(tmp_path, capsys):
    code, _, err = run(["decompose", "--num-blocks", 200, "--out", tmp_path], capsys)
    assert code == 4
    assert json.loads(err)["error"] == "InfeasibleSpec"


def test_unreachable_backend_exit_5(tmp_path, capsys, monkeypatch):
    run(["decompose", "--seed", 1, "--out", tmp_path / "a"], capsys)
    monkeypatch.setenv("JENGA_BACKEND_URL", "http://127.0.0.1:9")
    monkeypatch.setenv("JENGA_EMBED_DIM_S", "8")
    monkeypatch.setenv("JENGA_EMBED_DIM_V", "8")
    monkeypatch.setenv("JENGA_HTTP_TIMEOUT_S", "2")
    code, _, err = run(
        ["decompose", "--backend", "http", "--image", tmp_path / "a" / "initial.png", "--out", tmp_path / "b"], capsys
    )
    assert code == 5
    assert json.loads(err)["error"] == "BackendUnavailable"


def test_rank(tmp_path, capsys):
    code, out, _ = run(["rank", "--seed", 4, "--n", 4, "--out", tmp_path], capsys)
    assert code == 0
    scores = [r["score"] for r in json.loads(out)]
    assert scores == sorted(scores, reverse=True)
    assert (tmp_path / "ranking.json").exists()


@pytest.fixture
def synth(tmp_path, capsys):
    d = tmp_path / "synth"
    assert run(["gen-synth", "--pairs", 6, "--scenes", 3, "--seed", 1, "--out", d], capsys)[0] == 0
    return d


def test_gen_synth_byte_identical(tmp_path, synth, capsys):
    run(["gen-synth", "--pairs", 6, "--scenes", 3, "--seed", 1, "--out", tmp_path / "again"], capsys)
    assert files(synth) == files(tmp_path / "again")


def test_gen_synth_confounder(tmp_path, capsys):
    from jenga.evaluation import load_pairwise_manifest

    run(["gen-synth", "--pairs", 8, "--scenes", 1, "--confounder", "--out", tmp_path], capsys)
    for case in load_pairwise_manifest(tmp_path / "pairwise.jsonl"):
        ma, mb = case.masks()
        dep, sup = (ma, mb) if case.first == "A" else (mb, ma)
        assert sup.sum() < dep.sum()


def test_gen_synth_zero_pairs(tmp_path, capsys):
    assert run(["gen-synth", "--pairs", 0, "--out", tmp_path], capsys)[0] == 2


def test_eval_pairwise_engine(tmp_path, synth, capsys):
    out = tmp_path / "ev"
    code, _, _ = run(["eval-pairwise", "--manifest", synth / "pairwise.jsonl", "--out", out], capsys)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["accuracy"] >= 0.95 and rep["total"] == 6
    local_refs_only(out / "report.html")
    assert "config.json" in files(out)


def test_eval_pairwise_oracle_predictions(tmp_path, synth, capsys):
    preds = tmp_path / "preds.jsonl"
    rows = [json.loads(line) for line in (synth / "pairwise.jsonl").read_text().splitlines()]
    preds.write_text("".join(json.dumps({"id": r["id"], "first": r["first"]}) + "\n" for r in rows))
    code, _, _ = run(
        ["eval-pairwise", "--manifest", synth / "pairwise.jsonl", "--method", f"predictions:{preds}", "--out", tmp_path / "ev"],
        capsys,
    )
    assert code == 0
    assert json.loads((tmp_path / "ev" / "report.json").read_text())["accuracy"] == 1.0


def test_unknown_method_usage(tmp_path, synth, capsys):
    code, _, err = run(["eval-pairwise", "--manifest", synth / "pairwise.jsonl", "--method", "biggest_first"], capsys)
    assert code == 2 and "usage" in err


def test_bad_manifest_exit_3(tmp_path, synth, capsys):
    (synth / "masks" / "pair_0002_a.png").unlink()
    code, _, err = run(["eval-pairwise", "--manifest", synth / "pairwise.jsonl", "--out", tmp_path / "ev"], capsys)
    assert code == 3
    assert "pair_0002" in json.loads(err)["message"]


def test_eval_full_and_heuristics(tmp_path, synth, capsys):
    code, out, _ = run(["eval-full", "--manifest", synth / "fullscene.jsonl", "--out", tmp_path / "e"], capsys)
    assert code == 0 and json.loads(out)["rate"] == "100.00%"
    for method in ("top_to_bottom", "small_to_large", "front_to_back"):
        code, _, _ = run(
            ["eval-full", "--manifest", synth / "fullscene.jsonl", "--method", method, "--out", tmp_path / method], capsys
        )
        assert code == 0


def test_ablate(tmp_path, synth, capsys):
    code, _, _ = run(
        ["ablate", "--manifest", synth / "pairwise.jsonl", "--n-values", "2,8", "--slots", "both,V", "--out", tmp_path / "ab"],
        capsys,
    )
    assert code == 0
    cells = json.loads((tmp_path / "ab" / "ablation.json").read_text())["cells"]
    assert len(cells) == 4
    assert run(["ablate", "--manifest", synth / "pairwise.jsonl", "--slots", "CLIP"], capsys)[0] == 2


def test_both_slots_disabled_is_usage(tmp_path, capsys):
    assert run(["rank", "--no-slot-s", "--no-slot-v"], capsys)[0] == 2
