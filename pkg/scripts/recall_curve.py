#!/usr/bin/env python3
"""Recall@k for the hashed bag-of-words embedder on a synthetic corpus.

Each passage is a handful of vocabulary tokens; each query keeps a random
subset of one passage's tokens, and that passage is the single relevant
item. Dropping tokens makes self-retrieval imperfect, so the curve is
informative instead of flat 1.0.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from factforge.backends import BackendProfile, HashedBowEmbedder
from factforge.retrieval import index_build, recall_at_k


def make_corpus(n: int, vocab: int, rng: random.Random) -> list[tuple[str, str]]:
    # Small shared vocabulary so distinct passages overlap heavily and
    # partial queries are genuinely ambiguous.
    shared = [f"term{i}" for i in range(vocab)]
    corpus = []
    for i in range(n):
        tokens = rng.choices(shared, k=8)
        corpus.append((f"p{i:05d}", " ".join(tokens)))
    return corpus


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--passages", type=int, default=2000)
    ap.add_argument("--queries", type=int, default=300)
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--vocab", type=int, default=60)
    ap.add_argument("--keep", type=float, default=0.4,
                    help="fraction of passage tokens kept in each query")
    ap.add_argument("--ks", default="1,2,5,10,20,50")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    corpus = make_corpus(args.passages, args.vocab, rng)
    profile = BackendProfile(name="embed", kind="embedding", transport="mock")
    embedder = HashedBowEmbedder(profile, dimension=args.dim)
    index = index_build(corpus, embedder)

    ks = sorted({int(k) for k in args.ks.split(",")})
    totals = {k: 0.0 for k in ks}
    picks = rng.sample(range(args.passages), k=min(args.queries, args.passages))
    for i in picks:
        pid, text = corpus[i]
        tokens = text.split()
        kept = rng.sample(tokens, k=max(1, round(len(tokens) * args.keep)))
        query_vec = embedder.embed([" ".join(kept)])[0]
        results = index.top_k(query_vec, k=max(ks))
        for k in ks:
            totals[k] += recall_at_k(results, {pid}, k=k)

    n_queries = len(picks)
    print(f"passages={args.passages} vocab={args.vocab} dim={args.dim} "
          f"keep={args.keep} queries={n_queries}")
    print(f"{'k':>4}  recall@k")
    for k in ks:
        print(f"{k:>4}  {totals[k] / n_queries:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
