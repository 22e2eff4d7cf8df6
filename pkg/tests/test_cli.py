import json

import pytest

from docground.cli import run


@pytest.fixture(autouse=True)
def pinned_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")


def read_jsonl(path):
    return [json.loads(l) for l in path.read_text().splitlines() if l.strip()]


@pytest.fixture
def bench_dir(tmp_path):
    d = tmp_path / "bench"
    assert run(["render-synthetic", "--kind", "bench", "--seed", "1", "--out-dir", str(d)]) == 0
    return d


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run([]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["evaluate", "--pred", str(tmp_path / "p.jsonl")]) == 2
    assert "usage" in capsys.readouterr().err


def test_self_evaluation(bench_dir, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = run(["evaluate", "--pred", str(bench_dir / "gt_as_pred.jsonl"), "--gt", str(bench_dir / "bench.jsonl"),
                "--iou", "0.5", "--sweep", "0.1,0.5,0.9", "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    for row in report["rows"]:
        assert row.get("acc_pct", 100.0) == 100.0
        assert row.get("f1_all", 1.0) == 1.0
    assert [p["f1_all"] for p in report["sweep"]] == [1.0, 1.0, 1.0]
    assert out.with_suffix(".txt").read_text() == capsys.readouterr().out
    manifest = json.loads((tmp_path / "report.json.manifest.json").read_text())
    assert manifest["command"] == "evaluate" and manifest["config"]["iou"] == 0.5
    assert len(manifest["inputs"]) == 2
    assert run(["report", "--report", str(out)]) == 0


def test_bad_input_exit_1(tmp_path, bench_dir):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind": "sample", "id": 1}\n')
    assert run(["evaluate", "--pred", str(bench_dir / "gt_as_pred.jsonl"), "--gt", str(bad)]) == 1
    assert run(["evaluate", "--pred", str(tmp_path / "missing.jsonl"), "--gt", str(bench_dir / "bench.jsonl")]) == 1
    assert run(["evaluate", "--pred", str(bench_dir / "gt_as_pred.jsonl"), "--gt", str(bench_dir / "bench.jsonl"), "--iou", "0"]) == 1


def test_verify_rejections_still_succeed(tmp_path):
    samples = tmp_path / "s.jsonl"
    rows = [
        {"id": "ok", "doc_type": "pdf", "question": "q", "answer": "<ocr>a</ocr><bbox>1,2,3,4</bbox>", "answer_class": "GA", "task": "Ga"},
        {"id": "broken", "doc_type": "pdf", "question": "q", "answer": "<ocr>a</ocr><bbox>1,2,3,4", "answer_class": "GA", "task": "Ga"},
    ]
    samples.write_text("".join(json.dumps(r) + "\n" for r in rows))
    before = samples.read_bytes()
    out = tmp_path / "v"
    assert run(["verify", "--samples", str(samples), "--out-dir", str(out), "--derive-plain"]) == 0
    assert [r["id"] for r in read_jsonl(out / "accepted.jsonl")] == ["ok"]
    rejected = read_jsonl(out / "rejected.jsonl")
    assert rejected[0]["verdict"]["defects"][0]["kind"] == "UnclosedTag"
    plain = read_jsonl(out / "plain_qa.jsonl")
    assert plain[0]["answer"] == "a" and plain[0]["task"] == "PlainQA"
    assert (out / "manifest.json").exists()
    assert samples.read_bytes() == before


def test_classify_writes_labels(tmp_path):
    src = tmp_path / "s.jsonl"
    src.write_text(json.dumps({"id": "a", "question": "What at <bbox>1,2,3,4</bbox>?", "answer_class": "PA"}) + "\n")
    out = tmp_path / "c.jsonl"
    assert run(["classify", "--samples", str(src), "--out", str(out)]) == 0
    assert read_jsonl(out)[0]["task"] == "Rt"


def test_scene_pipeline(tmp_path):
    d = tmp_path / "scenes"
    assert run(["render-synthetic", "--kind", "scenes", "--n", "2", "--seed", "3", "--out-dir", str(d)]) == 0
    truth = read_jsonl(d / "extents.jsonl")[0]["extents"]
    out = tmp_path / "boxes.jsonl"
    assert run(["extract-boxes", "--scene", str(d / "scene0000.json"), "--tol", "0", "--out", str(out)]) == 0
    got = {r["layer_id"]: r["pixel_box"] for r in read_jsonl(out)}
    assert got == truth


def test_layout_pipeline(tmp_path):
    d = tmp_path / "layouts"
    assert run(["render-synthetic", "--kind", "layouts", "--n", "1", "--out-dir", str(d)]) == 0
    out = tmp_path / "merged.jsonl"
    args = ["merge-layout", "--ordered", str(d / "page0000.ordered.jsonl"),
            "--unordered", str(d / "page0000.unordered.jsonl"), "--out", str(out)]
    assert run(args) == 0
    assert len(read_jsonl(out)) >= len(read_jsonl(d / "page0000.ordered.jsonl")) - 2
    assert run(args + ["--dup-iou", "1.5"]) == 1


def test_pdf_pipeline(tmp_path):
    d = tmp_path / "pdf"
    assert run(["render-synthetic", "--kind", "pdf", "--n", "3", "--out-dir", str(d)]) == 0
    samples = tmp_path / "samples.jsonl"
    assert run(["post-annotate", "--generated", str(d / "generated.jsonl"), "--pages", str(d / "pages.jsonl"),
                "--seed", "2", "--out", str(samples)]) == 0
    stats = json.loads((tmp_path / "samples.jsonl.stats.json").read_text())
    assert stats["samples"] == 3
    out = tmp_path / "v"
    assert run(["verify", "--samples", str(samples), "--pages", str(d / "pages.jsonl"), "--strict-pdf", "--out-dir", str(out)]) == 0
    assert len(read_jsonl(out / "accepted.jsonl")) == 3
    tasks = tmp_path / "tasks.jsonl"
    assert run(["gen-parsing-tasks", "--pages", str(d / "pages.jsonl"), "--granularity", "line,paragraph",
                "--task", "recognition", "--out", str(tasks)]) == 0
    assert read_jsonl(tasks)
    assert run(["gen-parsing-tasks", "--pages", str(d / "pages.jsonl"), "--granularity", "bogus", "--out", str(tasks)]) == 2


def test_sweep_command(bench_dir, tmp_path, capsys):
    out = tmp_path / "sweep.json"
    assert run(["sweep", "--pred", str(bench_dir / "gt_as_pred.jsonl"), "--gt", str(bench_dir / "bench.jsonl"),
                "--out", str(out)]) == 0
    assert [r["f1_all"] for r in json.loads(out.read_text())] == [1.0] * 5


def test_reruns_are_byte_identical(tmp_path):
    def files(d):
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["render-synthetic", "--kind", "pdf", "--n", "4", "--seed", "9", "--out-dir", str(d)]) == 0
        assert run(["post-annotate", "--generated", str(d / "generated.jsonl"), "--pages", str(d / "pages.jsonl"),
                    "--out", str(d / "samples.jsonl")]) == 0
    fa, fb = files(a), files(b)
    # manifests name their own directory in input paths, compare data files only
    for name in fa:
        if "manifest" not in name:
            assert fa[name] == fb[name], name


def test_rerun_in_place_reproduces_manifest(tmp_path):
    args = ["render-synthetic", "--kind", "bench", "--seed", "4", "--out-dir", str(tmp_path)]
    assert run(args) == 0
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert run(args) == 0
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first
