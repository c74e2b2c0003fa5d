"""Atomic file writes and CSV helpers."""

import csv
import io
import os
import tempfile


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` via a temp file in the same directory and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"output directory does not exist: {directory}")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def format_float(x):
    # repr round-trips float64 exactly and is platform independent
    return repr(float(x))


def csv_text(header, rows, comments=()):
    """Render rows as CSV; ``comments`` become leading ``# key=value`` lines."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def read_csv(path):
    """Return ``(comments, header, rows)``; comment lines are ``# key=value``."""
    comments = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            comments[key.strip()] = value.strip()
        elif line:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    return comments, header, list(reader)
