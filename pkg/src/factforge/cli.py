"""Command-line interface.

One executable with subcommands covering the whole pipeline:

    ingest    pages -> passage windows
    generate  passages -> synthesis records (chat backend)
    derive    records -> retriever pairs / NLI triplets / task instances
    index     passages -> dense index file (embedding backend)
    verify    text -> claim-level verdict trace (all three backends)
    eval      task instances -> benchmark report (chat judge)

Every subcommand accepts --config (JSON file with backend profiles and
defaults), --seed, and --dry-run (print the resolved plan, touch nothing).
Flags beat config values, which beat built-in defaults. Logs go to stderr;
data goes to files. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import backends as be
from . import corpus, dataset, evalharness, synthgen
from .errors import FactforgeError
from .jsonlio import dumps_canonical, read_records, write_jsonl
from .retrieval import PassageIndex, index_build
from .verification import ChatClaimExtractor, verify_text

log = logging.getLogger("factforge")

DEFAULT_MAX_RETRIES = 2
DEFAULT_SEEDS = 5


@dataclass(frozen=True)
class RunConfig:
    """Defaults and backend profiles loaded from a config file."""

    profiles: Mapping[str, be.BackendProfile] = field(default_factory=dict)
    defaults: Mapping[str, Any] = field(default_factory=dict)
    base_dir: Path | None = None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise FactforgeError("config file must hold a JSON object")
        profile_rows = raw.get("profiles", {})
        profiles = {
            name: be.BackendProfile.from_dict(name, row)
            for name, row in profile_rows.items()
        }
        defaults = {k: v for k, v in raw.items() if k != "profiles"}
        return cls(profiles=profiles, defaults=defaults, base_dir=Path(path).parent)

    def profile(self, name: str) -> be.BackendProfile:
        if name not in self.profiles:
            raise FactforgeError(
                f"backend profile {name!r} not found in config "
                f"(available: {sorted(self.profiles)})"
            )
        return self.profiles[name]

    def backend(self, name: str, kind: str):
        profile = self.profile(name)
        if profile.kind != kind:
            raise FactforgeError(
                f"profile {name!r} has kind {profile.kind!r}, expected {kind!r}"
            )
        return be.build_backend(profile, base_dir=self.base_dir)


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        return RunConfig.load(args.config)
    return RunConfig()


def _resolve(flag_value, config: RunConfig, key: str, fallback):
    if flag_value is not None:
        return flag_value
    if key in config.defaults:
        return config.defaults[key]
    return fallback


def _emit_plan(command: str, plan: dict[str, Any]) -> int:
    print(dumps_canonical({"command": command, "plan": plan}))
    return 0


# --- subcommand implementations --------------------------------------------------


def _cmd_ingest(args: argparse.Namespace) -> int:
    config = _load_config(args)
    window = int(_resolve(args.window, config, "window", corpus.DEFAULT_WINDOW))
    stride = int(_resolve(args.stride, config, "stride", corpus.DEFAULT_STRIDE))
    seed = int(_resolve(args.seed, config, "seed", 0))
    plan = {
        "pages": args.pages,
        "out": args.out,
        "window": window,
        "stride": stride,
        "sample_per_page": bool(args.sample_per_page),
        "seed": seed,
    }
    if args.dry_run:
        return _emit_plan("ingest", plan)
    pages = corpus.read_pages(args.pages)
    passages = []
    skipped = 0
    for page in pages:
        if args.sample_per_page:
            try:
                passages.append(corpus.sample_passage(page, seed, window, stride))
            except FactforgeError:
                skipped += 1
        else:
            passages.extend(corpus.page_passages(page, window, stride))
    count = corpus.write_passages(args.out, passages)
    log.info(
        "ingested %d pages into %d passages (%d skipped) -> %s",
        len(pages), count, skipped, args.out,
    )
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    max_retries = int(
        _resolve(args.max_retries, config, "max_retries", DEFAULT_MAX_RETRIES)
    )
    plan = {
        "passages": args.passages,
        "backend": args.backend,
        "max_retries": max_retries,
        "out": args.out,
    }
    if args.dry_run:
        return _emit_plan("generate", plan)
    chat = config.backend(args.backend, be.KIND_CHAT)
    passages = corpus.read_passages(args.passages)
    if not passages:
        raise FactforgeError(f"no passages found in {args.passages}")
    records = []
    failures = 0
    for passage in passages:
        try:
            records.append(synthgen.generate_record(passage, chat, max_retries))
        except FactforgeError as exc:
            failures += 1
            log.warning("dropping passage %s: %s", passage.passage_id, exc)
    if not records:
        raise FactforgeError("every passage failed generation")
    synthgen.write_records(args.out, records)
    log.info(
        "generated %d records (%d passages dropped) -> %s",
        len(records), failures, args.out,
    )
    return 0


def _split_for_derive(records, args: argparse.Namespace, config: RunConfig):
    if not args.split:
        return records
    ratio = float(_resolve(args.ratio, config, "ratio", dataset.SPLIT_RATIO))
    seed = int(_resolve(args.seed, config, "seed", 0))
    train, val = dataset.split_train_val(records, ratio, seed)
    return train if args.split == "train" else val


def _cmd_derive(args: argparse.Namespace) -> int:
    config = _load_config(args)
    plan = {
        "records": args.records,
        "what": args.what,
        "out": args.out,
        "split": args.split,
        "passages": args.passages,
        "nli_backend": args.nli_backend,
    }
    if args.dry_run:
        return _emit_plan("derive", plan)
    records = synthgen.read_records(args.records)
    records = _split_for_derive(records, args, config)
    valid = [r for r in records if r.validation.ok]
    if len(valid) < len(records):
        log.info("skipping %d records with hard validation failures", len(records) - len(valid))

    rows: list[dict[str, Any]]
    if args.what == "retriever":
        pairs = [p for r in valid for p in dataset.derive_retriever_pairs(r)]
        rows = [{"schema": "retriever_pairs", "version": 1, "count": len(pairs)}]
        rows.extend(p.to_row() for p in pairs)
    elif args.what == "nli":
        mine_neutrals = bool(args.passages and args.nli_backend)
        neutrals_by_record: dict[str, list[str] | None] = {}
        if mine_neutrals:
            nli = config.backend(args.nli_backend, be.KIND_NLI)
            by_page: dict[str, list[corpus.Passage]] = {}
            for p in corpus.read_passages(args.passages):
                by_page.setdefault(p.page_id, []).append(p)
            for record in valid:
                pool = [
                    p
                    for p in by_page.get(record.passage.page_id, [])
                    if p.passage_id != record.passage.passage_id
                ]
                if pool:
                    neutrals_by_record[record.record_id] = [
                        dataset.mine_neutral_passage(claim, pool, nli).text
                        for claim in record.outputs.claims
                    ]
                else:
                    neutrals_by_record[record.record_id] = None
        triplets = []
        for record in valid:
            triplets.extend(
                dataset.derive_nli_triplets(record, neutrals_by_record.get(record.record_id))
            )
        rows = [{
            "schema": "nli_triplets",
            "version": 1,
            "count": len(triplets),
            "neutrals_mined": mine_neutrals,
        }]
        rows.extend(t.to_row() for t in triplets)
    elif args.what == "task1":
        instances = dataset.build_task1(valid)
        rows = [{"schema": "task1_instances", "version": 1, "count": len(instances)}]
        rows.extend(i.to_row() for i in instances)
    else:
        instances2 = dataset.build_task2(valid)
        rows = [{"schema": "task2_instances", "version": 1, "count": len(instances2)}]
        rows.extend(i.to_row() for i in instances2)

    n = write_jsonl(args.out, rows) - 1
    log.info("derived %d %s rows -> %s", n, args.what, args.out)
    return 0


def _cmd_index(args: argparse.Namespace) -> int:
    config = _load_config(args)
    plan = {"passages": args.passages, "backend": args.backend, "out": args.out}
    if args.dry_run:
        return _emit_plan("index", plan)
    embedder = config.backend(args.backend, be.KIND_EMBEDDING)
    passages = corpus.read_passages(args.passages)
    index = index_build(passages, embedder)
    index.save(args.out)
    log.info(
        "indexed %d passages (dimension %d) -> %s", len(index), index.dimension, args.out
    )
    return 0


def _parse_backend_spec(spec: str) -> dict[str, str]:
    roles = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise FactforgeError(
                f"--backends expects role=profile assignments, got {part!r}"
            )
        role, name = part.split("=", 1)
        roles[role.strip()] = name.strip()
    missing = {"extractor", "embedder", "nli"} - set(roles)
    if missing:
        raise FactforgeError(f"--backends is missing roles: {sorted(missing)}")
    return roles


def _cmd_verify(args: argparse.Namespace) -> int:
    config = _load_config(args)
    k = int(_resolve(args.k, config, "top_k", 30))
    plan = {
        "text": args.text,
        "index": args.index,
        "backends": args.backends,
        "k": k,
        "trace": args.trace,
    }
    if args.dry_run:
        return _emit_plan("verify", plan)
    roles = _parse_backend_spec(args.backends)
    extractor = ChatClaimExtractor(config.backend(roles["extractor"], be.KIND_CHAT))
    embedder = config.backend(roles["embedder"], be.KIND_EMBEDDING)
    nli = config.backend(roles["nli"], be.KIND_NLI)
    index = PassageIndex.load(args.index)

    if args.text == "-":
        text = sys.stdin.read()
    else:
        text = Path(args.text).read_text(encoding="utf-8")
    if not text.strip():
        raise FactforgeError("no text to verify")

    verdict = verify_text(text, extractor, index, embedder, nli, k)
    rows: list[dict[str, Any]] = [
        {"schema": "verification_trace", "version": 1, "k": k}
    ]
    for trace in verdict.claim_traces:
        rows.append({
            "claim": trace.claim,
            "decision": trace.decision,
            "deciding_passage_id": trace.deciding_passage_id,
            "rank_examined": trace.rank_examined,
        })
    rows.append({"factual": verdict.factual})
    write_jsonl(args.trace, rows)
    log.info(
        "verdict: %s (%d claims) -> %s",
        "factual" if verdict.factual else "not factual",
        len(verdict.claim_traces),
        args.trace,
    )
    return 0


def _load_few_shot(path: str | None) -> tuple[tuple[str, bool], ...]:
    if not path:
        return ()
    from .jsonlio import iter_jsonl

    examples = [
        (row["text"], bool(row["label"]))
        for row in iter_jsonl(path)
        if "text" in row
    ]
    return tuple(examples)


def _load_instances(path: str, task: str):
    if task == "1":
        return [
            dataset.Task1Instance.from_row(row)
            for row in read_records(path)
            if "text" in row
        ]
    return [
        dataset.Task2Instance.from_row(row)
        for row in read_records(path)
        if "claim" in row
    ]


def _build_judge_system(
    chat,
    base_spec: evalharness.PromptSpec,
    task: str,
    index: PassageIndex | None,
    embedder,
    k: int,
):
    """Wrap a chat judge as a (instance, rng) -> bool verdict system."""

    def system(instance, rng) -> bool:
        spec = base_spec
        if task == "1":
            text = instance.text
            if spec.mode == evalharness.MODE_RAG:
                if index is None or embedder is None:
                    raise FactforgeError("RAG on task 1 needs --index and --embed-backend")
                query = embedder.embed([text])[0]
                hits = index.top_k(query, k)
                spec = replace(
                    spec, evidence=tuple(index.text_of(pid) for pid, _ in hits)
                )
        else:
            text = instance.claim
            if spec.mode == evalharness.MODE_RAG:
                spec = replace(spec, evidence=(instance.evidence,))
            else:
                text = f"{instance.claim}{spec.evidence_separator}{instance.evidence}"
        raw = chat.complete(evalharness.build_prompt(spec, text))
        return evalharness.parse_llm_verdict(raw, explain_mode=spec.explain)

    return system


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    n_seeds = int(_resolve(args.seeds, config, "seeds", DEFAULT_SEEDS))
    seed_base = int(_resolve(args.seed, config, "seed", 0))
    k = int(_resolve(None, config, "top_k", 30))
    token_budget = _resolve(args.token_budget, config, "token_budget", None)
    separator = _resolve(None, config, "evidence_separator", evalharness.DEFAULT_EVIDENCE_SEPARATOR)
    plan = {
        "task": args.task,
        "mode": args.mode,
        "instances": args.instances,
        "backend": args.backend,
        "seeds": n_seeds,
        "seed": seed_base,
        "report": args.report,
        "few_shot": args.few_shot,
        "index": args.index,
        "embed_backend": args.embed_backend,
        "token_budget": token_budget,
    }
    if args.dry_run:
        return _emit_plan("eval", plan)

    instances = _load_instances(args.instances, args.task)
    if not instances:
        raise FactforgeError(f"no instances found in {args.instances}")
    chat = config.backend(args.backend, be.KIND_CHAT)
    spec = evalharness.PromptSpec(
        mode=args.mode,
        few_shot_examples=_load_few_shot(args.few_shot),
        token_budget=int(token_budget) if token_budget is not None else None,
        evidence_separator=separator,
        system_slot=not args.no_system_slot,
    )
    index = PassageIndex.load(args.index) if args.index else None
    embedder = (
        config.backend(args.embed_backend, be.KIND_EMBEDDING)
        if args.embed_backend
        else None
    )
    if args.task == "1" and args.mode == evalharness.MODE_RAG and index is None:
        raise FactforgeError("RAG on task 1 needs --index and --embed-backend")
    if spec.few_shot and not spec.few_shot_examples:
        raise FactforgeError("few-shot modes need --few-shot with example records")

    task_name = (
        evalharness.TASK_END_TO_END if args.task == "1" else evalharness.TASK_CLAIM_VERIFICATION
    )
    system = _build_judge_system(chat, spec, args.task, index, embedder, k)
    report = evalharness.run_benchmark(
        task_name, system, instances, [seed_base + i for i in range(n_seeds)]
    )
    Path(args.report).write_text(
        json.dumps(report.to_row(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    log.info(
        "balanced accuracy %.4f +/- %.4f over %d seeds -> %s",
        report.balanced_accuracy, report.balanced_accuracy_std, n_seeds, args.report,
    )
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with backend profiles and defaults")
    common.add_argument("--seed", type=int, default=None, help="base random seed")
    common.add_argument(
        "--dry-run", action="store_true",
        help="print the resolved plan as JSON and do nothing",
    )

    parser = argparse.ArgumentParser(
        prog="factforge",
        description="Synthesize factual/unfactual text pairs and fact-check texts "
        "against a passage corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="split pages into passage windows")
    p.add_argument("--pages", required=True, help="page record file or directory")
    p.add_argument("--out", required=True, help="output passage file")
    p.add_argument("--window", type=int, default=None, help="sentences per passage")
    p.add_argument("--stride", type=int, default=None, help="window step in sentences")
    p.add_argument(
        "--sample-per-page", action="store_true",
        help="emit one uniformly sampled window per page instead of all windows",
    )
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("generate", parents=[common], help="synthesize records from passages")
    p.add_argument("--passages", required=True)
    p.add_argument("--backend", required=True, help="chat backend profile name")
    p.add_argument("--max-retries", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("derive", parents=[common], help="derive training data or task instances")
    p.add_argument("--records", required=True)
    p.add_argument("--what", required=True, choices=["retriever", "nli", "task1", "task2"])
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "val"], default=None,
                   help="derive from one side of the record-level split")
    p.add_argument("--ratio", type=float, default=None, help="train fraction for --split")
    p.add_argument("--passages", default=None,
                   help="all-windows passage file for neutral mining (nli only)")
    p.add_argument("--nli-backend", default=None,
                   help="NLI backend profile for neutral mining (nli only)")
    p.set_defaults(func=_cmd_derive)

    p = sub.add_parser("index", parents=[common], help="embed passages into a dense index")
    p.add_argument("--passages", required=True)
    p.add_argument("--backend", required=True, help="embedding backend profile name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("verify", parents=[common], help="fact-check one text against an index")
    p.add_argument("--text", required=True, help="text file, or - for stdin")
    p.add_argument("--index", required=True)
    p.add_argument(
        "--backends", required=True,
        help="role assignments: extractor=NAME,embedder=NAME,nli=NAME",
    )
    p.add_argument("--k", type=int, default=None, help="passages retrieved per claim")
    p.add_argument("--trace", required=True, help="output trace file")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("eval", parents=[common], help="run an LLM judge over task instances")
    p.add_argument("--task", required=True, choices=["1", "2"])
    p.add_argument("--mode", required=True, choices=list(evalharness.MODES))
    p.add_argument("--instances", required=True)
    p.add_argument("--backend", required=True, help="chat judge profile name")
    p.add_argument("--seeds", type=int, default=None, help="number of seeded runs")
    p.add_argument("--report", required=True, help="output report file (JSON)")
    p.add_argument("--few-shot", default=None, help="example record file for fs modes")
    p.add_argument("--index", default=None, help="index file for RAG evidence")
    p.add_argument("--embed-backend", default=None, help="embedding profile for RAG")
    p.add_argument("--token-budget", type=int, default=None)
    p.add_argument("--no-system-slot", action="store_true",
                   help="prefix instructions to the user text instead of a system message")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FactforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    sys.exit(main())
