from __future__ import annotations

import shutil
import struct
import unittest
from pathlib import Path

import numpy as np

from qst_workbench.cache import DatasetCache, content_key
from qst_workbench.datasets import StateFamily, generate_dataset, load_dataset
from qst_workbench.errors import FormatVersionMismatch
from qst_workbench.measure import cube_suite
from qst_workbench.store import (
    BinaryReader,
    BinaryWriter,
    atomic_write_text,
    file_lock,
    lock_path_for,
)


class StoreTests(unittest.TestCase):
    def setUp(self) -> None:
        self.base = Path.cwd() / "build_tmp" / "tests_store"
        shutil.rmtree(self.base, ignore_errors=True)
        self.base.mkdir(parents=True, exist_ok=True)

    def test_atomic_write_leaves_no_temp_files(self) -> None:
        target = atomic_write_text(self.base / "out" / "note.txt", "a,b\r\nc\n")
        self.assertEqual(target.read_bytes(), b"a,b\r\nc\n")
        self.assertEqual([p.name for p in target.parent.iterdir()], ["note.txt"])

    def test_lock_is_exclusive_and_released(self) -> None:
        lock = lock_path_for(self.base / "data.qds")
        self.assertEqual(lock.name, "data.qds.lock")
        with file_lock(lock):
            self.assertTrue(lock.exists())
            with self.assertRaises(TimeoutError):
                with file_lock(lock, timeout_seconds=0.1, poll_seconds=0.02):
                    pass
        self.assertFalse(lock.exists())

    def test_binary_primitives(self) -> None:
        writer = BinaryWriter(b"TESTFMT1")
        writer.u64(3)
        writer.f64_array(np.array([1.5, -2.0, 1e-300]))
        writer.text("café")
        reader = BinaryReader(writer.payload(), b"TESTFMT1")
        self.assertEqual(reader.u64(), 3)
        np.testing.assert_array_equal(reader.f64_array(3), [1.5, -2.0, 1e-300])
        self.assertEqual(reader.text(), "café")
        self.assertTrue(reader.at_end())

    def test_reader_errors(self) -> None:
        with self.assertRaises(FormatVersionMismatch) as ctx:
            BinaryReader(b"OTHERFMT" + bytes(8), b"TESTFMT1", "x.bin")
        self.assertIn("expected format TESTFMT1", str(ctx.exception))
        reader = BinaryReader(b"TESTFMT1" + bytes(4), b"TESTFMT1")
        with self.assertRaises(FormatVersionMismatch):
            reader.u64()

    def test_manifest_must_be_a_json_object(self) -> None:
        writer = BinaryWriter(b"TESTFMT1")
        writer.text('{"qubits": 2, "suite": "cube"}')
        reader = BinaryReader(writer.payload(), b"TESTFMT1")
        self.assertEqual(reader.manifest(), {"qubits": "2", "suite": "cube"})
        reader.expect_end()
        for raw in (b"{bad", b"\xff", b"3"):
            reader = BinaryReader(b"TESTFMT1" + struct.pack("<Q", len(raw)) + raw, b"TESTFMT1", "m.bin")
            with self.assertRaises(FormatVersionMismatch) as ctx:
                reader.manifest()
            self.assertIn("m.bin", str(ctx.exception))

    def test_trailing_bytes_are_rejected(self) -> None:
        reader = BinaryReader(b"TESTFMT1" + bytes(9), b"TESTFMT1")
        reader.u64()
        with self.assertRaises(FormatVersionMismatch):
            reader.expect_end()


class DatasetCacheTests(unittest.TestCase):
    def setUp(self) -> None:
        self.base = Path.cwd() / "build_tmp" / "tests_cache"
        shutil.rmtree(self.base, ignore_errors=True)
        self.cache = DatasetCache(self.base)
        self.spec = {"role": "train", "suite": "cube9", "seed": 1, "count": 4}
        self.calls = 0

    def _factory(self):
        self.calls += 1
        return generate_dataset(StateFamily(), cube_suite(2), None, count=4, seed=1)

    def test_key_ignores_ordering(self) -> None:
        reordered = dict(reversed(list(self.spec.items())))
        self.assertEqual(content_key(self.spec), content_key(reordered))
        self.assertNotEqual(content_key(self.spec), content_key({**self.spec, "seed": 2}))

    def test_second_request_hits_the_cache(self) -> None:
        first = self.cache.get_or_create(self.spec, self._factory)
        second = self.cache.get_or_create(self.spec, self._factory)
        self.assertEqual(self.calls, 1)
        np.testing.assert_array_equal(first.features, second.features)
        index = self.cache.load_index()
        key = content_key(self.spec)
        self.assertEqual(index[key]["rows"], "4")
        self.assertEqual(index[key]["suite"], "cube9")

    def test_unreadable_entry_is_regenerated(self) -> None:
        self.cache.get_or_create(self.spec, self._factory)
        self.cache.path_for(content_key(self.spec)).write_bytes(b"garbage")
        with self.assertLogs("qst_workbench.cache", level="WARNING"):
            dataset = self.cache.get_or_create(self.spec, self._factory)
        self.assertEqual(self.calls, 2)
        self.assertEqual(len(dataset), 4)

    def test_entry_with_a_corrupt_manifest_is_regenerated(self) -> None:
        self.cache.get_or_create(self.spec, self._factory)
        path = self.cache.path_for(content_key(self.spec))
        path.write_bytes(b"QSTDATA1" + struct.pack("<Q", 4) + b"{bad")
        with self.assertLogs("qst_workbench.cache", level="WARNING"):
            dataset = self.cache.get_or_create(self.spec, self._factory)
        self.assertEqual(self.calls, 2)
        self.assertEqual(len(dataset), 4)
        self.assertEqual(len(load_dataset(path)), 4)

    def test_lock_sits_next_to_the_index(self) -> None:
        self.assertEqual(self.cache.lock_path, lock_path_for(self.cache.index_path))
        self.cache.get_or_create(self.spec, self._factory)
        self.assertFalse(self.cache.lock_path.exists())

    def test_corrupt_index_is_tolerated(self) -> None:
        self.cache.index_path.write_text("{not json", encoding="utf-8")
        self.assertEqual(self.cache.load_index(), {})
        self.cache.get_or_create(self.spec, self._factory)
        self.assertIn(content_key(self.spec), self.cache.load_index())


if __name__ == "__main__":
    unittest.main()
