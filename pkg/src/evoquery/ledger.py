"""Run-ledger persistence with a canonical JSON form.

A ledger is a directory: config.json (run parameters and input file
fingerprints), generations.jsonl (one record per generation), and
final_results.json (the run-wide capped result list). Every value is
serialized through one canonical dumper (sorted keys, compact separators,
ASCII escapes, floats at 17 significant digits) so equal runs produce
byte-equal files and replay can compare lines directly.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterator

from .errors import LedgerCorrupt

CONFIG_FILE = "config.json"
GENERATIONS_FILE = "generations.jsonl"
FINAL_RESULTS_FILE = "final_results.json"


def format_float(value: float) -> str:
    """17-significant-digit decimal, always spelled as a float literal."""
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"non-finite float {value!r} cannot enter a ledger")
    text = f"{value:.17g}"
    if not any(ch in text for ch in ".eE"):
        text += ".0"
    return text


def canonical_json(value: Any) -> str:
    """Deterministic JSON: sorted keys, no spaces, escaped non-ASCII."""
    parts: list[str] = []
    _write_canonical(value, parts)
    return "".join(parts)


def _write_canonical(value: Any, parts: list[str]) -> None:
    if value is None or isinstance(value, (bool, int, str)):
        parts.append(json.dumps(value, ensure_ascii=True))
    elif isinstance(value, float):
        parts.append(format_float(value))
    elif isinstance(value, dict):
        parts.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise TypeError(f"ledger object keys must be strings, got {key!r}")
            if i:
                parts.append(",")
            parts.append(json.dumps(key, ensure_ascii=True))
            parts.append(":")
            _write_canonical(value[key], parts)
        parts.append("}")
    elif isinstance(value, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(value):
            if i:
                parts.append(",")
            _write_canonical(item, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__} into a ledger")


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_ledger_dir(
    ledger_dir: str | Path,
    config_payload: dict,
    generation_payloads: list[dict],
    final_results_payload: list[dict],
) -> None:
    directory = Path(ledger_dir)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONFIG_FILE).write_text(
        canonical_json(config_payload) + "\n", encoding="utf-8"
    )
    with open(directory / GENERATIONS_FILE, "w", encoding="utf-8") as fh:
        for payload in generation_payloads:
            fh.write(canonical_json(payload) + "\n")
    (directory / FINAL_RESULTS_FILE).write_text(
        canonical_json(final_results_payload) + "\n", encoding="utf-8"
    )


def read_config_payload(ledger_dir: str | Path) -> dict:
    path = Path(ledger_dir) / CONFIG_FILE
    if not path.is_file():
        raise LedgerCorrupt(f"missing {CONFIG_FILE} in {ledger_dir}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LedgerCorrupt(f"{CONFIG_FILE} is not valid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise LedgerCorrupt(f"{CONFIG_FILE} must hold an object")
    return payload


def read_generation_lines(ledger_dir: str | Path) -> list[str]:
    path = Path(ledger_dir) / GENERATIONS_FILE
    if not path.is_file():
        raise LedgerCorrupt(f"missing {GENERATIONS_FILE} in {ledger_dir}")
    lines = path.read_text(encoding="utf-8").splitlines()
    return [line for line in lines if line.strip()]


def read_final_results_text(ledger_dir: str | Path) -> str:
    path = Path(ledger_dir) / FINAL_RESULTS_FILE
    if not path.is_file():
        raise LedgerCorrupt(f"missing {FINAL_RESULTS_FILE} in {ledger_dir}")
    return path.read_text(encoding="utf-8")


def parse_record_line(line: str, line_no: int) -> dict:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LedgerCorrupt(f"generation line {line_no} is not valid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise LedgerCorrupt(f"generation line {line_no} must hold an object")
    return payload


def first_divergent_path(expected: Any, actual: Any, path: str = "") -> str | None:
    """Walk two parsed JSON trees and name the first differing field."""
    if type(expected) is not type(actual):
        return path or "<root>"
    if isinstance(expected, dict):
        for key in sorted(set(expected) | set(actual)):
            if key not in expected or key not in actual:
                return f"{path}.{key}" if path else key
            sub = first_divergent_path(expected[key], actual[key], f"{path}.{key}" if path else key)
            if sub:
                return sub
        return None
    if isinstance(expected, list):
        if len(expected) != len(actual):
            return f"{path}.length" if path else "length"
        for i, (e, a) in enumerate(zip(expected, actual)):
            sub = first_divergent_path(e, a, f"{path}[{i}]")
            if sub:
                return sub
        return None
    if expected != actual:
        return path or "<root>"
    return None


def iter_generation_payloads(ledger_dir: str | Path) -> Iterator[dict]:
    for line_no, line in enumerate(read_generation_lines(ledger_dir), start=1):
        yield parse_record_line(line, line_no)
