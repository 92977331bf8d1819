import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from speaker_fusion._exceptions import ArchiveError, ConfigHashMismatchError
from speaker_fusion._frontend._feature_matrix import FeatureKind, FeatureMatrix

ARCHIVE_MAGIC = b"SPKF"
ARCHIVE_VERSION = 1
_LENGTH = struct.Struct("<I")
_DTYPES = ("<f4", "<f8")


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    """
    Write a file by writing a temporary sibling and renaming it into place

    Args:
        path: Destination path; parent directories are created
        data: File contents
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def check_config_hash(
    stored: Optional[str], expected: Optional[str], what: str, path: Optional[str] = None
) -> None:
    """
    Refuse an artifact built under another configuration

    Args:
        stored: Hash recorded in the artifact
        expected: Hash of the current configuration; None skips the check
        what: Artifact description used in the message
        path: Artifact path, if any

    Raises:
        ConfigHashMismatchError: When `expected` is given and the stored hash differs
    """
    if expected is not None and stored != expected:
        raise ConfigHashMismatchError(
            f"{what} was built with config hash {str(stored)[:12]}, "
            f"the current configuration hashes to {expected[:12]}",
            path,
        )


def write_archive(
    path: Union[str, Path],
    matrix: np.ndarray,
    header: Dict[str, Any],
    dtype: str = "<f4",
) -> None:
    """
    Write a row-major matrix with a JSON header

    Layout: magic "SPKF", little-endian uint32 header length, UTF-8 JSON header,
    then the matrix as little-endian floats.

    Args:
        path: Destination path
        matrix: 2-D array to store
        header: Extra header fields (kind, config_hash, ...)
        dtype: "<f4" or "<f8"
    """
    if dtype not in _DTYPES:
        raise ArchiveError(f"Unsupported archive dtype: {dtype}")
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ArchiveError(f"Archives hold 2-D matrices, got shape {matrix.shape}")
    document = dict(header)
    document.update(
        {
            "format_version": ARCHIVE_VERSION,
            "rows": int(matrix.shape[0]),
            "dims": int(matrix.shape[1]),
            "dtype": dtype,
        }
    )
    header_bytes = json.dumps(document, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(matrix, dtype=dtype).tobytes()
    blob = ARCHIVE_MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + payload
    atomic_write_bytes(path, blob)


def _read_header(f, path: str) -> Dict[str, Any]:
    magic = f.read(len(ARCHIVE_MAGIC))
    if magic != ARCHIVE_MAGIC:
        raise ArchiveError("not a speaker-fusion archive (bad magic)", path)
    raw_length = f.read(_LENGTH.size)
    if len(raw_length) != _LENGTH.size:
        raise ArchiveError("truncated header", path)
    (length,) = _LENGTH.unpack(raw_length)
    raw_header = f.read(length)
    if len(raw_header) != length:
        raise ArchiveError("truncated header", path)
    try:
        header = json.loads(raw_header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArchiveError(f"unreadable header: {e}", path) from e
    if header.get("format_version") != ARCHIVE_VERSION:
        raise ArchiveError(f"unsupported format_version {header.get('format_version')}", path)
    if header.get("dtype") not in _DTYPES:
        raise ArchiveError(f"unsupported dtype {header.get('dtype')}", path)
    return header


def read_archive_header(path: Union[str, Path]) -> Dict[str, Any]:
    """Read only the JSON header of an archive."""
    try:
        with open(path, "rb") as f:
            return _read_header(f, str(path))
    except FileNotFoundError as e:
        raise ArchiveError("archive not found", str(path)) from e


def read_archive(path: Union[str, Path]) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Read an archive written by `write_archive`

    Args:
        path: Archive path

    Returns:
        Tuple[np.ndarray, Dict[str, Any]]: The matrix as float64 and the header

    Raises:
        ArchiveError: On a missing file, bad magic or truncated payload
    """
    try:
        with open(path, "rb") as f:
            header = _read_header(f, str(path))
            payload = f.read()
    except FileNotFoundError as e:
        raise ArchiveError("archive not found", str(path)) from e

    rows, dims = int(header["rows"]), int(header["dims"])
    expected = rows * dims * np.dtype(header["dtype"]).itemsize
    if len(payload) != expected:
        raise ArchiveError(f"payload holds {len(payload)} bytes, expected {expected}", str(path))
    matrix = np.frombuffer(payload, dtype=header["dtype"]).reshape(rows, dims)
    return matrix.astype(np.float64), header


def write_feature_archive(path: Union[str, Path], feat: FeatureMatrix, config_hash: str) -> None:
    """Store a feature stream as 32-bit floats tagged with its kind and front-end hash."""
    write_archive(
        path,
        feat.vectors,
        {"kind": feat.kind.value, "frames": feat.n_frames, "config_hash": config_hash},
        dtype="<f4",
    )


def read_feature_archive(
    path: Union[str, Path], expected_config_hash: Optional[str] = None
) -> Tuple[FeatureMatrix, Dict[str, Any]]:
    """
    Load a feature stream archive

    Args:
        path: Archive path
        expected_config_hash: When given, the archive must carry this front-end hash

    Returns:
        Tuple[FeatureMatrix, Dict[str, Any]]: The stream and the archive header

    Raises:
        ArchiveError: On unreadable archives, unknown kinds or a config hash mismatch
    """
    matrix, header = read_archive(path)
    try:
        kind = FeatureKind(header.get("kind"))
    except ValueError as e:
        raise ArchiveError(f"unknown feature kind {header.get('kind')!r}", str(path)) from e
    check_config_hash(header.get("config_hash"), expected_config_hash, "feature archive", str(path))
    return FeatureMatrix(matrix, kind), header
