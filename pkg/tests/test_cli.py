"""End-to-end command-line runs against fully scripted offline backends."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from factforge.backends import BackendProfile, chat_fingerprint
from factforge.cli import main
from factforge.corpus import Page, Passage, page_passages, sample_passage
from factforge.synthgen import build_unified_prompt
from factforge.verification import build_claim_extraction_prompt

from conftest import page_rows

_GEN_PROFILE = BackendProfile(name="gen", kind="chat", transport="mock")
MARKER = "wrongmark"


def step_json_for(passage: Passage) -> str:
    """A well-formed generation answer whose unfactual side carries MARKER."""
    claims = list(passage.sentences)
    original = claims[0]
    altered = original.rstrip(".") + f" except {MARKER}."
    factual = " ".join(claims)
    unfactual = " ".join([altered] + claims[1:])
    return json.dumps(
        {
            "step_1": claims,
            "step_2": [altered, original],
            "step_3": factual,
            "step_4": unfactual,
        }
    )


def _chat_entry(prompt: str, response: str) -> dict:
    messages = [{"role": "user", "content": prompt}]
    return {
        "fingerprint": chat_fingerprint(_GEN_PROFILE, messages),
        "response": response,
    }


def build_workspace(tmp_path: Path, n_pages: int = 4) -> dict:
    """Pages, a chat script covering every window, and a backend config."""
    rows = page_rows(n_pages, sentences_per_page=7)
    pages_path = tmp_path / "pages.jsonl"
    pages_path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")

    entries = []
    factual_texts = {}
    unfactual_texts = {}
    for row in rows:
        page = Page(row["page_id"], row["title"], row["text"])
        for passage in page_passages(page):
            entries.append(
                _chat_entry(build_unified_prompt(passage), step_json_for(passage))
            )
        sampled = sample_passage(page, seed=0)
        payload = json.loads(step_json_for(sampled))
        factual_texts[page.page_id] = payload["step_3"]
        unfactual_texts[page.page_id] = payload["step_4"]
        altered = payload["step_2"][0]
        claims_of = {
            payload["step_3"]: payload["step_1"],
            payload["step_4"]: [altered] + payload["step_1"][1:],
        }
        for text, claims in claims_of.items():
            entries.append(
                _chat_entry(
                    build_claim_extraction_prompt(text),
                    json.dumps({"step_1": claims}),
                )
            )

    script_path = tmp_path / "gen_script.jsonl"
    script_path.write_text("\n".join(json.dumps(e) for e in entries) + "\n")

    config = {
        "profiles": {
            "gen": {
                "kind": "chat",
                "transport": "mock",
                "options": {"mock": "script", "script": "gen_script.jsonl"},
            },
            "judge": {
                "kind": "chat",
                "transport": "mock",
                "options": {"mock": "verdict_rule", "markers": [MARKER]},
            },
            "embed": {
                "kind": "embedding",
                "transport": "mock",
                "options": {"mock": "hashed_bow", "dimension": 128},
            },
            "nli": {
                "kind": "nli",
                "transport": "mock",
                "options": {"mock": "rules", "contradictions": [[".", MARKER]]},
            },
        }
    }
    config_path = tmp_path / "backends.json"
    config_path.write_text(json.dumps(config, indent=2))

    return {
        "pages": pages_path,
        "config": config_path,
        "script": script_path,
        "dir": tmp_path,
        "factual_texts": factual_texts,
        "unfactual_texts": unfactual_texts,
        "n_pages": n_pages,
    }


def run(args: list) -> int:
    return main([str(a) for a in args])


@pytest.fixture
def ws(tmp_path):
    return build_workspace(tmp_path)


@pytest.fixture
def pipeline(ws):
    """Workspace plus sampled passages, records, and an index on disk."""
    d = ws["dir"]
    assert run(["ingest", "--pages", ws["pages"], "--out", d / "passages.jsonl",
                "--sample-per-page", "--seed", 0, "--config", ws["config"]]) == 0
    assert run(["ingest", "--pages", ws["pages"], "--out", d / "windows.jsonl",
                "--config", ws["config"]]) == 0
    assert run(["generate", "--passages", d / "passages.jsonl", "--backend", "gen",
                "--out", d / "records.jsonl", "--config", ws["config"]]) == 0
    assert run(["index", "--passages", d / "passages.jsonl", "--backend", "embed",
                "--out", d / "index.bin", "--config", ws["config"]]) == 0
    ws.update(passages=d / "passages.jsonl", windows=d / "windows.jsonl",
              records=d / "records.jsonl", index=d / "index.bin")
    return ws


def _rows(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


# --- dry runs and exit codes ------------------------------------------------------


def test_dry_run_prints_plan_only(ws, capsys):
    out = ws["dir"] / "nope.jsonl"
    code = run(["ingest", "--pages", ws["pages"], "--out", out, "--dry-run"])
    assert code == 0
    assert not out.exists()
    plan = json.loads(capsys.readouterr().out)
    assert plan["command"] == "ingest"
    assert plan["plan"]["window"] == 5
    assert plan["plan"]["stride"] == 1
    assert plan["plan"]["sample_per_page"] is False


def test_dry_run_reflects_resolved_flags(ws, capsys):
    run(["ingest", "--pages", ws["pages"], "--out", "x", "--window", 3,
         "--sample-per-page", "--dry-run"])
    plan = json.loads(capsys.readouterr().out)["plan"]
    assert plan["window"] == 3
    assert plan["sample_per_page"] is True


def test_missing_required_flag_is_usage_error(ws):
    with pytest.raises(SystemExit) as exc:
        run(["ingest", "--pages", ws["pages"]])
    assert exc.value.code == 2


def test_unknown_profile_is_domain_error(ws, capsys):
    code = run(["generate", "--passages", ws["pages"], "--backend", "ghost",
                "--out", ws["dir"] / "r.jsonl", "--config", ws["config"]])
    assert code == 1
    assert "ghost" in capsys.readouterr().err


def test_broken_config_is_domain_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    code = run(["ingest", "--pages", tmp_path, "--out", tmp_path / "o", "--config", bad])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_missing_pages_file_is_domain_error(tmp_path, capsys):
    code = run(["ingest", "--pages", tmp_path / "absent.jsonl", "--out", tmp_path / "o"])
    assert code == 1


# --- ingest ------------------------------------------------------------------------


def test_ingest_full_windows(ws):
    out = ws["dir"] / "all.jsonl"
    assert run(["ingest", "--pages", ws["pages"], "--out", out]) == 0
    rows = _rows(out)
    # 7 sentences per page, window 5, stride 1 -> 3 windows per page
    assert len(rows) == ws["n_pages"] * 3
    starts = {r["start"] for r in rows}
    assert starts == {0, 1, 2}


def test_ingest_sample_per_page_and_seed(ws):
    d = ws["dir"]
    a, b, c = d / "a.jsonl", d / "b.jsonl", d / "c.jsonl"
    assert run(["ingest", "--pages", ws["pages"], "--out", a, "--sample-per-page", "--seed", 0]) == 0
    assert run(["ingest", "--pages", ws["pages"], "--out", b, "--sample-per-page", "--seed", 0]) == 0
    assert run(["ingest", "--pages", ws["pages"], "--out", c, "--sample-per-page", "--seed", 99]) == 0
    assert len(_rows(a)) == ws["n_pages"]
    assert a.read_bytes() == b.read_bytes()  # same seed, identical bytes
    assert a.read_bytes() != c.read_bytes()  # different seed, different windows


def test_ingest_window_flag_beats_config(ws):
    config = json.loads(ws["config"].read_text())
    config["window"] = 3
    cfg = ws["dir"] / "override.json"
    cfg.write_text(json.dumps(config))
    out_cfg = ws["dir"] / "w3.jsonl"
    out_flag = ws["dir"] / "w7.jsonl"
    assert run(["ingest", "--pages", ws["pages"], "--out", out_cfg, "--config", cfg]) == 0
    assert run(["ingest", "--pages", ws["pages"], "--out", out_flag, "--config", cfg,
                "--window", 7]) == 0
    # window 3 over 7 sentences -> 5 windows; window 7 -> 1 window
    assert len(_rows(out_cfg)) == ws["n_pages"] * 5
    assert len(_rows(out_flag)) == ws["n_pages"] * 1


# --- generate ----------------------------------------------------------------------


def test_generate_records(pipeline):
    rows = _rows(pipeline["records"])
    header, records = rows[0], rows[1:]
    assert header["schema"] == "synthesis_records"
    assert len(records) == pipeline["n_pages"]
    for row in records:
        assert row["validation"]["hard_failures"] == []
        assert MARKER in row["outputs"]["unfactual_text"]


def test_generate_is_byte_deterministic(pipeline):
    d = pipeline["dir"]
    again = d / "records_again.jsonl"
    assert run(["generate", "--passages", pipeline["passages"], "--backend", "gen",
                "--out", again, "--config", pipeline["config"]]) == 0
    assert again.read_bytes() == pipeline["records"].read_bytes()


def test_generate_drops_unscripted_passages(pipeline, capsys):
    d = pipeline["dir"]
    # one passage the script has never heard of
    rogue = Passage("rogue:0", "rogue", 0, ("Unscripted sentence one.", "Two."))
    rows = _rows(pipeline["passages"])
    mixed = d / "mixed.jsonl"
    mixed.write_text(
        "\n".join(json.dumps(r) for r in rows + [rogue.to_row()]) + "\n"
    )
    out = d / "partial.jsonl"
    code = run(["generate", "--passages", mixed, "--backend", "gen",
                "--out", out, "--config", pipeline["config"]])
    assert code == 0
    assert len(_rows(out)) - 1 == pipeline["n_pages"]  # rogue dropped, rest kept


def test_generate_all_failures_exit_1(ws, capsys):
    d = ws["dir"]
    assert run(["ingest", "--pages", ws["pages"], "--out", d / "p.jsonl",
                "--sample-per-page", "--seed", 7]) == 0
    empty_script = d / "empty_script.jsonl"
    empty_script.write_text("")
    config = json.loads(ws["config"].read_text())
    config["profiles"]["gen"]["options"]["script"] = "empty_script.jsonl"
    cfg = d / "empty.json"
    cfg.write_text(json.dumps(config))
    code = run(["generate", "--passages", d / "p.jsonl", "--backend", "gen",
                "--out", d / "r.jsonl", "--config", cfg])
    assert code == 1
    assert not (d / "r.jsonl").exists()


# --- derive ------------------------------------------------------------------------


def test_derive_retriever_pairs(pipeline):
    out = pipeline["dir"] / "retriever.jsonl"
    assert run(["derive", "--records", pipeline["records"], "--what", "retriever",
                "--out", out, "--config", pipeline["config"]]) == 0
    rows = _rows(out)
    header, pairs = rows[0], rows[1:]
    assert header["schema"] == "retriever_pairs"
    # 5 claims per record -> 3 * (5 + 1) = 18 pairs per record
    assert header["count"] == len(pairs) == pipeline["n_pages"] * 18
    assert {"claim", "passage_text", "record_id", "pairing_kind"} <= set(pairs[0])


def test_derive_nli_without_mining(pipeline):
    out = pipeline["dir"] / "nli.jsonl"
    assert run(["derive", "--records", pipeline["records"], "--what", "nli",
                "--out", out, "--config", pipeline["config"]]) == 0
    rows = _rows(out)
    header, trips = rows[0], rows[1:]
    assert header["neutrals_mined"] is False
    # 2n + 4 with n = 5 claims
    assert len(trips) == pipeline["n_pages"] * 14
    labels = {t["label"] for t in trips}
    assert labels == {"ENT", "CONTR"}


def test_derive_nli_with_neutral_mining(pipeline):
    out = pipeline["dir"] / "nli_mined.jsonl"
    assert run(["derive", "--records", pipeline["records"], "--what", "nli",
                "--out", out, "--passages", pipeline["windows"],
                "--nli-backend", "nli", "--config", pipeline["config"]]) == 0
    rows = _rows(out)
    header, trips = rows[0], rows[1:]
    assert header["neutrals_mined"] is True
    # 3n + 4 with n = 5 claims
    assert len(trips) == pipeline["n_pages"] * 19
    neutral = [t for t in trips if t["label"] == "NEUT"]
    assert len(neutral) == pipeline["n_pages"] * 5
    # mined premises come from sibling windows of the same page
    for t in neutral:
        assert t["premise"] != ""


def test_derive_task_instances(pipeline):
    d = pipeline["dir"]
    t1, t2 = d / "task1.jsonl", d / "task2.jsonl"
    assert run(["derive", "--records", pipeline["records"], "--what", "task1",
                "--out", t1, "--config", pipeline["config"]]) == 0
    assert run(["derive", "--records", pipeline["records"], "--what", "task2",
                "--out", t2, "--config", pipeline["config"]]) == 0
    rows1, rows2 = _rows(t1)[1:], _rows(t2)[1:]
    assert len(rows1) == len(rows2) == pipeline["n_pages"] * 2
    assert {r["label"] for r in rows1} == {True, False}
    for row in rows1:
        assert (MARKER in row["text"]) == (not row["label"])
    for row in rows2:
        assert (MARKER in row["claim"]) == (not row["label"])
        assert MARKER not in row["evidence"]


def test_derive_split_partitions_records(pipeline):
    d = pipeline["dir"]
    train, val = d / "train.jsonl", d / "val.jsonl"
    common = ["derive", "--records", pipeline["records"], "--what", "task1",
              "--config", pipeline["config"], "--seed", 3]
    assert run(common + ["--split", "train", "--out", train]) == 0
    assert run(common + ["--split", "val", "--out", val]) == 0
    train_ids = {r["record_id"] for r in _rows(train)[1:]}
    val_ids = {r["record_id"] for r in _rows(val)[1:]}
    assert not (train_ids & val_ids)
    assert len(train_ids) == 3 and len(val_ids) == 1  # 80/20 of 4, clamped


# --- index and verify ------------------------------------------------------------------


def test_verify_factual_text(pipeline):
    d = pipeline["dir"]
    text_path = d / "check.txt"
    text_path.write_text(pipeline["factual_texts"]["page0"])
    trace_path = d / "trace.jsonl"
    code = run(["verify", "--text", text_path, "--index", pipeline["index"],
                "--backends", "extractor=gen,embedder=embed,nli=nli",
                "--trace", trace_path, "--config", pipeline["config"]])
    assert code == 0
    rows = _rows(trace_path)
    assert rows[0]["schema"] == "verification_trace"
    assert rows[-1] == {"factual": True}
    claim_rows = rows[1:-1]
    assert len(claim_rows) == 5
    assert all(r["decision"] for r in claim_rows)


def test_verify_unfactual_text(pipeline):
    d = pipeline["dir"]
    text_path = d / "check_bad.txt"
    text_path.write_text(pipeline["unfactual_texts"]["page2"])
    trace_path = d / "trace_bad.jsonl"
    code = run(["verify", "--text", text_path, "--index", pipeline["index"],
                "--backends", "extractor=gen,embedder=embed,nli=nli",
                "--trace", trace_path, "--config", pipeline["config"]])
    assert code == 0
    rows = _rows(trace_path)
    assert rows[-1] == {"factual": False}
    decisions = [r["decision"] for r in rows[1:-1]]
    assert False in decisions


def test_verify_from_stdin(pipeline, monkeypatch):
    import io

    d = pipeline["dir"]
    monkeypatch.setattr("sys.stdin", io.StringIO(pipeline["factual_texts"]["page1"]))
    trace_path = d / "trace_stdin.jsonl"
    code = run(["verify", "--text", "-", "--index", pipeline["index"],
                "--backends", "extractor=gen,embedder=embed,nli=nli",
                "--trace", trace_path, "--config", pipeline["config"]])
    assert code == 0
    assert _rows(trace_path)[-1] == {"factual": True}


def test_verify_backend_spec_must_be_complete(pipeline, capsys):
    code = run(["verify", "--text", "-", "--index", pipeline["index"],
                "--backends", "extractor=gen", "--trace", pipeline["dir"] / "t",
                "--config", pipeline["config"]])
    assert code == 1
    err = capsys.readouterr().err
    assert "embedder" in err and "nli" in err


# --- eval --------------------------------------------------------------------------


def _derive_task(pipeline, what):
    out = pipeline["dir"] / f"{what}_inst.jsonl"
    assert run(["derive", "--records", pipeline["records"], "--what", what,
                "--out", out, "--config", pipeline["config"]]) == 0
    return out


def test_eval_task1_zero_shot(pipeline):
    instances = _derive_task(pipeline, "task1")
    report_path = pipeline["dir"] / "report.json"
    code = run(["eval", "--task", "1", "--mode", "zs", "--instances", instances,
                "--backend", "judge", "--seeds", 2, "--report", report_path,
                "--config", pipeline["config"]])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["task"] == "end_to_end_factuality"
    assert report["n_instances"] == pipeline["n_pages"] * 2
    assert report["balanced_accuracy"] == 1.0
    assert report["balanced_accuracy_std"] == 0.0
    assert len(report["runs"]) == 2
    assert [r["seed"] for r in report["runs"]] == [0, 1]
    assert report["runs"][0]["n_unparseable"] == 0


def test_eval_task2_zero_shot_explained(pipeline):
    instances = _derive_task(pipeline, "task2")
    report_path = pipeline["dir"] / "report2.json"
    code = run(["eval", "--task", "2", "--mode", "zs_ex", "--instances", instances,
                "--backend", "judge", "--seeds", 1, "--report", report_path,
                "--config", pipeline["config"]])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["task"] == "claim_verification"
    assert report["balanced_accuracy"] == 1.0


def test_eval_task1_rag(pipeline):
    instances = _derive_task(pipeline, "task1")
    report_path = pipeline["dir"] / "report_rag.json"
    code = run(["eval", "--task", "1", "--mode", "rag", "--instances", instances,
                "--backend", "judge", "--seeds", 1, "--report", report_path,
                "--index", pipeline["index"], "--embed-backend", "embed",
                "--config", pipeline["config"]])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["balanced_accuracy"] == 1.0


def test_eval_task1_rag_requires_index(pipeline, capsys):
    instances = _derive_task(pipeline, "task1")
    code = run(["eval", "--task", "1", "--mode", "rag", "--instances", instances,
                "--backend", "judge", "--seeds", 1,
                "--report", pipeline["dir"] / "r.json",
                "--config", pipeline["config"]])
    assert code == 1


def test_eval_few_shot(pipeline):
    instances = _derive_task(pipeline, "task1")
    shots = pipeline["dir"] / "shots.jsonl"
    shots.write_text(
        json.dumps({"text": "An example everyone agrees with.", "label": True})
        + "\n"
        + json.dumps({"text": f"An example with {MARKER} inside.", "label": False})
        + "\n"
    )
    report_path = pipeline["dir"] / "report_fs.json"
    code = run(["eval", "--task", "1", "--mode", "fs", "--instances", instances,
                "--backend", "judge", "--seeds", 1, "--report", report_path,
                "--few-shot", shots, "--config", pipeline["config"]])
    assert code == 0
    assert json.loads(report_path.read_text())["balanced_accuracy"] == 1.0


def test_eval_few_shot_mode_requires_examples(pipeline):
    instances = _derive_task(pipeline, "task1")
    code = run(["eval", "--task", "1", "--mode", "fs", "--instances", instances,
                "--backend", "judge", "--seeds", 1,
                "--report", pipeline["dir"] / "r.json",
                "--config", pipeline["config"]])
    assert code == 1


def test_eval_report_is_deterministic_modulo_runtime(pipeline):
    instances = _derive_task(pipeline, "task1")
    d = pipeline["dir"]
    reports = []
    for name in ("rep_a.json", "rep_b.json"):
        assert run(["eval", "--task", "1", "--mode", "zs", "--instances", instances,
                    "--backend", "judge", "--seeds", 3, "--report", d / name,
                    "--config", pipeline["config"]]) == 0
        reports.append(json.loads((d / name).read_text()))
    for rep in reports:
        rep.pop("runtime_seconds")
    assert reports[0] == reports[1]
