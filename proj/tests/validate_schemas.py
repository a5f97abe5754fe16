"""Validate a snapshot and layout documents against the JSON schemas.

usage: validate_schemas.py SCHEMA_DIR SNAPSHOT LAYOUT [LAYOUT ...]
Exits 77 (skipped) when jsonschema is not installed.
"""
import json
import sys
from pathlib import Path

try:
    import jsonschema
except ImportError:
    print("jsonschema not installed; skipping")
    sys.exit(77)


def load(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def main(argv):
    schemas = Path(argv[1])
    snapshot = jsonschema.Draft202012Validator(load(schemas / "snapshot.schema.json"))
    layout = jsonschema.Draft202012Validator(load(schemas / "layout.v1.schema.json"))
    failures = 0
    jobs = [(snapshot, argv[2])] + [(layout, p) for p in argv[3:]]
    for validator, path in jobs:
        errors = sorted(validator.iter_errors(load(path)), key=lambda e: list(e.path))
        for e in errors[:5]:
            print(f"{path}: {'/'.join(map(str, e.path))}: {e.message}")
        print(("FAIL " if errors else "ok   ") + path)
        failures += bool(errors)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
