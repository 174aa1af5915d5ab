"""Best-effort converter from the raw OpenDialKG release CSV to the schema-1
JSONL sample format (see data.py).

The raw release is a CSV whose "Messages" column holds a JSON conversation;
walker annotations appear as message items carrying metadata.path =
[score, [[head, relation, tail], ...], ...]. Our filtering keeps annotations
whose path has 1 or 2 hops and which follow at least one spoken turn; exact
sample counts therefore depend on these criteria and are reported, not
asserted. Usage:

    python -m kghop.opendialkg raw/data.csv out/samples.jsonl
"""

import csv
import json
import sys

from .data import write_dataset

SPEAKERS = {"participant1": "user", "participant2": "assistant"}


def _samples_from_conversation(conv_idx, messages):
    history = []
    last_utterance = None
    for msg_idx, item in enumerate(messages):
        metadata = item.get("metadata") or {}
        path_entry = metadata.get("path")
        if path_entry:
            triples = path_entry[1] if len(path_entry) > 1 else []
            if triples and 1 <= len(triples) <= 2 and last_utterance is not None:
                yield {
                    "sample_id": f"odkg-{conv_idx:06d}-{msg_idx:03d}",
                    "history": [list(turn) for turn in history[:-1]],
                    "utterance": last_utterance,
                    "start_entity": triples[0][0],
                    "gold_path": [[r, t] for _h, r, t in triples],
                    "goal_entity": triples[-1][2],
                }
        text = item.get("message")
        if text:
            speaker = SPEAKERS.get(item.get("sender", ""), "user")
            history.append((speaker, text))
            last_utterance = text


def convert(csv_path, out_path):
    """Returns (n_samples, n_conversations, n_bad_rows)."""
    samples = []
    conversations = 0
    bad_rows = 0
    csv.field_size_limit(sys.maxsize)
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for conv_idx, row in enumerate(reader):
            raw = row.get("Messages") or next(iter(row.values()), None)
            try:
                messages = json.loads(raw)
            except (TypeError, json.JSONDecodeError):
                bad_rows += 1
                continue
            conversations += 1
            samples.extend(_samples_from_conversation(conv_idx, messages))
    write_dataset(samples, out_path)
    return len(samples), conversations, bad_rows


def main(argv=None):
    argv = argv if argv is not None else sys.argv[1:]
    if len(argv) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    n_samples, n_conversations, bad = convert(argv[0], argv[1])
    print(f"converted {n_conversations} conversations -> {n_samples} samples "
          f"({bad} unparseable rows) into {argv[1]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
