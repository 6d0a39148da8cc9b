import json
import math
from pathlib import Path


def _plain(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class JsonLinesWriter:
    """
    Line-buffered JSON-lines log. Every record is flushed as soon as it is
    written so an interrupted run leaves a parseable file.
    """

    def __init__(self, path, append=False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "a" if append else "w", buffering=1)

    def write(self, record):
        record = {key: _plain(value) for key, value in record.items()}
        self._handle.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def read_json_lines(path):
    with open(path) as handle:
        return [json.loads(line) for line in handle if line.strip()]


def truncate_json_lines(path, last_iter):
    """Drop records past ``last_iter`` so a resumed run can append cleanly."""
    path = Path(path)
    if not path.exists():
        return
    kept = [r for r in read_json_lines(path) if r.get("iter", 0) <= last_iter]
    with open(path, "w") as handle:
        for record in kept:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
