from __future__ import annotations

import json
import os
import struct
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Union

import numpy as np

from .errors import FormatVersionMismatch

MAGIC_LENGTH = 8


def _as_path(p: Union[str, Path]) -> Path:
    return p if isinstance(p, Path) else Path(p)


def lock_path_for(path: Union[str, Path]) -> Path:
    target = _as_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target.with_suffix(target.suffix + ".lock")


@contextmanager
def file_lock(lock_path: Union[str, Path], timeout_seconds: float = 10.0, poll_seconds: float = 0.05) -> Iterator[None]:
    """Exclusive lock held by creating the .lock file; removed on exit."""
    lock_path = _as_path(lock_path)
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    while True:
        try:
            fd = os.open(str(lock_path), os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError:
            if (time.monotonic() - start) >= timeout_seconds:
                raise TimeoutError(f"Timed out waiting for lock: {lock_path}")
            time.sleep(poll_seconds)
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        yield
    finally:
        os.close(fd)
        try:
            lock_path.unlink()
        except OSError:
            pass


def atomic_write(target_path: Union[str, Path], write: Callable[[Path], None]) -> Path:
    """Run write(tmp_path) on a temp file next to target, then os.replace it into place."""
    target_path = _as_path(target_path)
    target_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=target_path.stem + "_", suffix=".tmp", dir=str(target_path.parent))
    os.close(fd)
    tmp_path = Path(tmp_name)
    try:
        write(tmp_path)
        os.replace(tmp_path, target_path)
    finally:
        if tmp_path.exists():
            try:
                tmp_path.unlink()
            except OSError:
                pass
    return target_path


def atomic_write_bytes(target_path: Union[str, Path], payload: bytes) -> Path:
    return atomic_write(target_path, lambda tmp: tmp.write_bytes(payload))


def atomic_write_text(target_path: Union[str, Path], text: str) -> Path:
    return atomic_write(target_path, lambda tmp: tmp.write_text(text, encoding="utf-8", newline=""))


class BinaryWriter:
    """Little-endian builder for the model and dataset files."""

    def __init__(self, magic: bytes) -> None:
        if len(magic) != MAGIC_LENGTH:
            raise ValueError(f"magic must be {MAGIC_LENGTH} bytes")
        self._chunks: List[bytes] = [magic]

    def u64(self, value: int) -> None:
        self._chunks.append(struct.pack("<Q", int(value)))

    def f64_array(self, values: np.ndarray) -> None:
        self._chunks.append(np.ascontiguousarray(values, dtype="<f8").tobytes())

    def text(self, value: str) -> None:
        raw = value.encode("utf-8")
        self.u64(len(raw))
        self._chunks.append(raw)

    def payload(self) -> bytes:
        return b"".join(self._chunks)


class BinaryReader:
    def __init__(self, payload: bytes, magic: bytes, source: str = "<bytes>") -> None:
        self._data = memoryview(payload)
        self._offset = 0
        self.source = source
        found = bytes(self._take(MAGIC_LENGTH))
        if found != magic:
            raise FormatVersionMismatch(
                f"{source}: expected format {magic.decode('ascii', 'replace')}, found {found.decode('ascii', 'replace')!r}"
            )

    @classmethod
    def from_path(cls, path: Union[str, Path], magic: bytes) -> "BinaryReader":
        path = _as_path(path)
        return cls(path.read_bytes(), magic, str(path))

    def _take(self, size: int) -> memoryview:
        end = self._offset + size
        if size < 0 or end > len(self._data):
            raise FormatVersionMismatch(f"{self.source}: truncated at byte {self._offset} (needed {size} more)")
        chunk = self._data[self._offset : end]
        self._offset = end
        return chunk

    def u64(self) -> int:
        return int(struct.unpack("<Q", self._take(8))[0])

    def f64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(8 * count), dtype="<f8").astype(float)

    def text(self) -> str:
        size = self.u64()
        try:
            return bytes(self._take(size)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatVersionMismatch(f"{self.source}: text field is not utf-8 ({exc.reason})") from None

    def manifest(self) -> Dict[str, str]:
        """A length-prefixed JSON object, values coerced to str."""
        try:
            data = json.loads(self.text())
        except ValueError as exc:
            raise FormatVersionMismatch(f"{self.source}: manifest is not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise FormatVersionMismatch(f"{self.source}: manifest is not a JSON object")
        return {str(k): str(v) for k, v in data.items()}

    def at_end(self) -> bool:
        return self._offset == len(self._data)

    def expect_end(self) -> None:
        if not self.at_end():
            raise FormatVersionMismatch(f"{self.source}: {len(self._data) - self._offset} unexpected trailing byte(s)")
