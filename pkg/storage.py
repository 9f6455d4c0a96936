import hashlib
import json
import logging
import os
import time
from typing import Dict, List, Optional, Sequence

import numpy as np

from ciphers import WordState
from errors import SpecParseError, UsageError

log = logging.getLogger("STORAGE")

OUTPUT_DIR = os.path.expanduser(os.getenv("FILTERXL_OUTPUT_DIR", "~/filterxl/runs"))
SUBDIRS = ("reports", "keystreams", "states")
BITS_PER_LINE = 64


def output_dir(base: Optional[str] = None) -> str:
    return os.path.expanduser(base or os.getenv("FILTERXL_OUTPUT_DIR") or OUTPUT_DIR)


def init_dirs(base: Optional[str] = None) -> str:
    root = output_dir(base)
    for sub in SUBDIRS:
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    return root


def _stamp() -> str:
    return time.strftime("%Y%m%d_%H%M%S")


# ==== KEYSTREAMS ====

def format_keystream(bits: Sequence[int]) -> str:
    """ASCII '0'/'1', newline-terminated lines of 64."""
    text = "".join("1" if b & 1 else "0" for b in bits)
    return "".join(text[i:i + BITS_PER_LINE] + "\n" for i in range(0, len(text), BITS_PER_LINE))


def parse_keystream(text: str, source: Optional[str] = None) -> np.ndarray:
    bits = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for col, ch in enumerate(line.strip(), start=1):
            if ch not in "01":
                raise SpecParseError(f"keystream files hold only 0/1, got {ch!r}", lineno, col, source)
            bits.append(1 if ch == "1" else 0)
    return np.array(bits, dtype=np.uint8)


def write_keystream(path: str, bits: Sequence[int]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="ascii") as f:
        f.write(format_keystream(bits))
    log.info("✓ wrote %d keystream bits to %s", len(bits), path)
    return path


def read_keystream(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise UsageError(f"keystream file {path} does not exist")
    with open(path, encoding="ascii") as f:
        return parse_keystream(f.read(), source=path)


# ==== SEALED STATES ====

def _seal(payload: Dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_sealed_state(path: str, cipher: str, state: WordState, seed: Optional[int] = None,
                       extra: Optional[Dict] = None) -> str:
    """Attack target state (post-initialization) with a SHA-256 seal over the payload."""
    payload = {'cipher': cipher, 'words_hex': state.to_hex(), 'seed': seed}
    if extra:
        payload.update(extra)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({'payload': payload, 'sha256': _seal(payload)}, f, indent=2)
    log.info("✓ sealed state written to %s", path)
    return path


def read_sealed_state(path: str) -> Dict:
    """Payload of a sealed state file; tampering raises UsageError."""
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SpecParseError(f"sealed state is not JSON: {e.msg}", e.lineno, e.colno, path)
    payload = doc.get('payload')
    if not isinstance(payload, dict) or doc.get('sha256') != _seal(payload):
        raise UsageError(f"sealed state {path} failed its integrity check")
    payload = dict(payload)
    payload['state'] = WordState.from_hex(payload['words_hex'])
    return payload


def sealed_state_path(keystream_path: str) -> str:
    root, _ = os.path.splitext(keystream_path)
    return root + ".state.json"


# ==== REPORTS ====

def save_report(report: Dict, kind: str, base: Optional[str] = None) -> str:
    root = init_dirs(base)
    path = os.path.join(root, "reports", f"{kind}_{_stamp()}_{os.getpid()}.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, default=str)
    log.info("✓ report saved: %s", path)
    return path


def list_reports(base: Optional[str] = None, limit: int = 50) -> List[str]:
    folder = os.path.join(output_dir(base), "reports")
    if not os.path.isdir(folder):
        return []
    names = sorted(os.listdir(folder), reverse=True)
    return [os.path.join(folder, n) for n in names if n.endswith(".json")][:limit]
