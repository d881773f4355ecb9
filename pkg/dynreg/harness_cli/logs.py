import json
from pathlib import Path

import numpy as np
from django.conf import settings
from django.utils import timezone


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (tuple, set, frozenset)):
        return list(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


class JsonLinesLog:
    """Append-only JSON-lines training/eval log.

    Every record carries event, iteration, config_hash, format_version and a
    UTC `time`; keys are sorted so reruns differ only in `time`.
    """

    def __init__(self, path, config_hash=""):
        self.path = Path(path)
        self.config_hash = config_hash
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = None

    def __enter__(self):
        self._handle = self.path.open("a")
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def write(self, event, iteration=None, **fields):
        record = {
            "event": event,
            "iteration": iteration,
            "config_hash": self.config_hash,
            "format_version": settings.FORMAT_VERSION,
            "time": timezone.now().isoformat(),
            **fields,
        }
        line = json.dumps(record, sort_keys=True, default=_plain) + "\n"
        if self._handle is None:
            with self.path.open("a") as handle:
                handle.write(line)
        else:
            self._handle.write(line)
            self._handle.flush()
        return record


def read_log(path):
    with Path(path).open() as handle:
        return [json.loads(line) for line in handle if line.strip()]
