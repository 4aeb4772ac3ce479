#!/usr/bin/env python3
"""Convert LitSearch corpus and query files to searchgym inputs.

Reads the `corpus_clean` and `query` splits as JSONL or Parquet (Parquet
needs pandas) and writes:

  dataset.json    dataset config with title and abstract channels
  corpus.jsonl    one document per paper, doc_id = corpusid
  queries.jsonl   one bench query per line, gold ids = corpusids

Usage:
  litsearch_to_jsonl.py --corpus corpus_clean.parquet --queries query.parquet --out-dir litsearch
"""

import argparse
import json
import sys
from pathlib import Path


def read_rows(path):
    path = Path(path)
    if path.suffix == ".parquet":
        import pandas as pd

        yield from pd.read_parquet(path).to_dict(orient="records")
        return
    with path.open() as f:
        for line in f:
            if line.strip():
                yield json.loads(line)


def text(value):
    return " ".join(str(value).split()) if value is not None else ""


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--queries", required=True)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--name", default="litsearch")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset = {
        "kind": "dataset",
        "body": {
            "name": args.name,
            "channels": [{"name": "title"}, {"name": "abstract"}],
            "metadata_fields": [],
        },
    }
    (out / "dataset.json").write_text(json.dumps(dataset, indent=2) + "\n")

    seen = set()
    n_docs = 0
    with (out / "corpus.jsonl").open("w") as f:
        for row in read_rows(args.corpus):
            doc_id = str(row["corpusid"])
            if doc_id in seen:
                continue
            seen.add(doc_id)
            channels = {k: text(row.get(k)) for k in ("title", "abstract") if text(row.get(k))}
            f.write(json.dumps({"doc_id": doc_id, "channels": channels}) + "\n")
            n_docs += 1

    n_queries = missing = 0
    with (out / "queries.jsonl").open("w") as f:
        for i, row in enumerate(read_rows(args.queries)):
            gold = [str(c) for c in row["corpusids"]]
            missing += sum(g not in seen for g in gold)
            q = {"query_id": f"q{i:04d}", "text": text(row["query"]), "gold_doc_ids": gold}
            f.write(json.dumps(q) + "\n")
            n_queries += 1

    print(f"{n_docs} documents, {n_queries} queries, {missing} gold ids not in corpus", file=sys.stderr)


if __name__ == "__main__":
    main()
