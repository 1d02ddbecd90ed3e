"""Blocking collectives built on an abstract ordered point-to-point transport.

Every collective runs in two phases.  First each rank reports a header
(collective kind, root, buffer length, dtype) to rank 0, which validates the
headers and answers with an acknowledgement or an error frame; this is the
rendezvous.  Then data moves along a fixed root-centric schedule.  Reductions
accumulate in ascending rank order, so results are bitwise reproducible and
independent of the transport.
"""

import struct
from enum import IntEnum

import numpy as np

from ..errors import ProtocolError, SizeError


class Kind(IntEnum):
    HANDSHAKE = 0
    BROADCAST = 1
    SCATTER = 2
    GATHER = 3
    ALL_GATHER = 4
    REDUCE = 5
    ALL_REDUCE = 6
    BARRIER = 7
    ERROR = 8


_DTYPE_CODES = {np.dtype("<f8"): 0, np.dtype("<f4"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_UNKNOWN = 255

_HEADER = struct.Struct("<iqB")
_ERR_PROTOCOL = 1
_ERR_SIZE = 2

KIND_NAMES = {
    "broadcast": Kind.BROADCAST,
    "scatter": Kind.SCATTER,
    "gather": Kind.GATHER,
    "all_gather": Kind.ALL_GATHER,
    "reduce": Kind.REDUCE,
    "all_reduce": Kind.ALL_REDUCE,
    "barrier": Kind.BARRIER,
}


def as_buffer(buf):
    """Flatten ``buf`` into a contiguous little-endian f64/f32 vector."""
    arr = np.asarray(buf)
    if arr.dtype == np.float32:
        dt = np.dtype("<f4")
    else:
        dt = np.dtype("<f8")
    return np.ascontiguousarray(arr, dtype=dt).reshape(-1)


def encode_array(arr):
    return bytes([_DTYPE_CODES[arr.dtype]]) + arr.tobytes()


def decode_array(payload):
    if not payload:
        raise ProtocolError("empty data frame")
    dt = _CODE_DTYPES[payload[0]]
    return np.frombuffer(payload, dtype=dt, offset=1).copy()


class Communicator:
    """Per-worker handle: rank, world size and blocking collectives.

    Subclasses provide ``_send_frame(dst, kind, payload)`` and
    ``_recv_frame(src) -> (kind, payload)`` with FIFO order per peer.
    """

    backend = "abstract"

    def __init__(self, rank, world_size):
        if world_size < 1 or not 0 <= rank < world_size:
            raise ValueError(f"invalid rank {rank} for world of size {world_size}")
        self.rank = rank
        self.world_size = world_size

    # transport -------------------------------------------------------------

    def _send_frame(self, dst, kind, payload):
        raise NotImplementedError

    def _recv_frame(self, src):
        raise NotImplementedError

    def _recv_expect(self, src, kind):
        got, payload = self._recv_frame(src)
        if got == Kind.ERROR:
            _raise_error_frame(payload)
        if got != kind:
            raise ProtocolError(
                f"rank {self.rank} expected {Kind(kind).name} from rank {src}, "
                f"got {_kind_name(got)}"
            )
        return payload

    def _send_array(self, dst, kind, arr):
        self._send_frame(dst, kind, encode_array(arr))

    def _recv_array(self, src, kind):
        return decode_array(self._recv_expect(src, kind))

    # rendezvous ------------------------------------------------------------

    def _negotiate(self, kind, root, length, dtype_code):
        """Validate that all ranks entered the same collective with sane sizes."""
        header = _HEADER.pack(root, length, dtype_code)
        if self.rank != 0:
            self._send_frame(0, kind, header)
            self._recv_expect(0, kind)
            return
        headers = {0: (kind, root, length, dtype_code)}
        error = None
        for src in range(1, self.world_size):
            got, payload = self._recv_frame(src)
            if got != kind:
                error = error or (
                    _ERR_PROTOCOL,
                    f"collective mismatch: rank 0 in {Kind(kind).name}, "
                    f"rank {src} in {_kind_name(got)}",
                )
                continue
            headers[src] = (got, *_HEADER.unpack(payload))
        if error is None:
            error = _check_headers(kind, headers, self.world_size)
        if error is not None:
            code, message = error
            frame = bytes([code]) + message.encode()
            for dst in range(1, self.world_size):
                self._send_frame(dst, Kind.ERROR, frame)
            _raise_error_frame(frame)
        for dst in range(1, self.world_size):
            self._send_frame(dst, kind, b"")

    def _check_root(self, root):
        if not 0 <= root < self.world_size:
            raise ValueError(f"root {root} outside world of size {self.world_size}")

    # data schedules ----------------------------------------------------------

    def _bcast_data(self, kind, arr, root):
        if self.rank == root:
            for dst in range(self.world_size):
                if dst != root:
                    self._send_array(dst, kind, arr)
            return arr.copy()
        return self._recv_array(root, kind)

    def _gather_data(self, kind, arr, root):
        if self.rank != root:
            self._send_array(root, kind, arr)
            return None
        parts = []
        for src in range(self.world_size):
            parts.append(arr if src == root else self._recv_array(src, kind))
        return parts

    def _reduce_data(self, kind, arr, root):
        parts = self._gather_data(kind, arr, root)
        if parts is None:
            return None
        acc = parts[0].copy()
        for part in parts[1:]:
            acc += part
        return acc

    # public collectives ------------------------------------------------------

    def broadcast(self, buf=None, root=0):
        """Every rank receives a copy of ``root``'s buffer."""
        self._check_root(root)
        if self.rank == root:
            arr = as_buffer(buf)
            self._negotiate(Kind.BROADCAST, root, arr.size, _DTYPE_CODES[arr.dtype])
            return self._bcast_data(Kind.BROADCAST, arr, root)
        length = -1 if buf is None else as_buffer(buf).size
        self._negotiate(Kind.BROADCAST, root, length, _UNKNOWN)
        return self._bcast_data(Kind.BROADCAST, None, root)

    def scatter(self, buf=None, root=0):
        """Rank k receives the k-th equal partition of ``root``'s buffer."""
        self._check_root(root)
        if self.rank == root:
            arr = as_buffer(buf)
            self._negotiate(Kind.SCATTER, root, arr.size, _DTYPE_CODES[arr.dtype])
            n = arr.size // self.world_size
            for dst in range(self.world_size):
                if dst != root:
                    self._send_array(dst, Kind.SCATTER, arr[dst * n:(dst + 1) * n])
            return arr[root * n:(root + 1) * n].copy()
        self._negotiate(Kind.SCATTER, root, -1, _UNKNOWN)
        return self._recv_array(root, Kind.SCATTER)

    def gather(self, buf, root=0):
        """Concatenation in ascending rank order at ``root``; None elsewhere."""
        self._check_root(root)
        arr = as_buffer(buf)
        self._negotiate(Kind.GATHER, root, arr.size, _DTYPE_CODES[arr.dtype])
        parts = self._gather_data(Kind.GATHER, arr, root)
        return None if parts is None else np.concatenate(parts)

    def all_gather(self, buf):
        """Concatenation in ascending rank order on every rank."""
        arr = as_buffer(buf)
        self._negotiate(Kind.ALL_GATHER, 0, arr.size, _DTYPE_CODES[arr.dtype])
        parts = self._gather_data(Kind.ALL_GATHER, arr, 0)
        full = None if parts is None else np.concatenate(parts)
        return self._bcast_data(Kind.ALL_GATHER, full, 0)

    def reduce(self, buf, root=0):
        """Elementwise sum at ``root`` accumulated in ascending rank order."""
        self._check_root(root)
        arr = as_buffer(buf)
        self._negotiate(Kind.REDUCE, root, arr.size, _DTYPE_CODES[arr.dtype])
        return self._reduce_data(Kind.REDUCE, arr, root)

    def all_reduce(self, buf):
        """Same sum as ``reduce(root=0)`` followed by a broadcast from rank 0."""
        arr = as_buffer(buf)
        self._negotiate(Kind.ALL_REDUCE, 0, arr.size, _DTYPE_CODES[arr.dtype])
        total = self._reduce_data(Kind.ALL_REDUCE, arr, 0)
        return self._bcast_data(Kind.ALL_REDUCE, total, 0)

    def barrier(self):
        self._negotiate(Kind.BARRIER, 0, 0, _UNKNOWN)

    def collective(self, kind, root=None, local=None):
        """Dispatch by name: ``kind`` is one of the seven collective names."""
        if kind not in KIND_NAMES:
            raise ValueError(f"unknown collective {kind!r}")
        if kind == "barrier":
            return self.barrier()
        if kind in ("all_gather", "all_reduce"):
            return getattr(self, kind)(local)
        return getattr(self, kind)(local, root=0 if root is None else root)

    # conveniences ------------------------------------------------------------

    def all_reduce_scalar(self, value):
        return float(self.all_reduce(np.array([value], dtype=np.float64))[0])

    def rng(self, base_seed):
        """Rank-distinct but reproducible stream: seed ``base_seed + rank``."""
        return np.random.default_rng(base_seed + self.rank)

    def close(self):
        pass

    def __repr__(self):
        return f"<{type(self).__name__} rank={self.rank} world_size={self.world_size}>"


def _kind_name(code):
    try:
        return Kind(code).name
    except ValueError:
        return f"unknown kind {code}"


def _check_headers(kind, headers, world_size):
    roots = {h[1] for h in headers.values()}
    if len(roots) > 1:
        return _ERR_PROTOCOL, f"{Kind(kind).name}: ranks disagree on root {sorted(roots)}"
    root = roots.pop()
    if kind == Kind.BARRIER:
        return None
    lengths = {src: h[2] for src, h in headers.items()}
    dtypes = {h[3] for h in headers.values() if h[3] != _UNKNOWN}
    if len(dtypes) > 1:
        return _ERR_SIZE, f"{Kind(kind).name}: ranks disagree on dtype"
    if kind == Kind.BROADCAST:
        expected = lengths[root]
        bad = [s for s, n in lengths.items() if n not in (-1, expected)]
        if bad:
            return _ERR_SIZE, (
                f"BROADCAST: root buffer has {expected} elements, "
                f"rank {bad[0]} passed {lengths[bad[0]]}"
            )
        return None
    if kind == Kind.SCATTER:
        n = lengths[root]
        if n % world_size:
            return _ERR_SIZE, f"SCATTER: {n} elements not divisible by world size {world_size}"
        return None
    if len(set(lengths.values())) > 1:
        detail = ", ".join(f"rank {s}: {n}" for s, n in sorted(lengths.items()))
        return _ERR_SIZE, f"{Kind(kind).name}: buffer lengths differ ({detail})"
    return None


def _raise_error_frame(payload):
    code = payload[0] if payload else _ERR_PROTOCOL
    message = payload[1:].decode(errors="replace")
    if code == _ERR_SIZE:
        raise SizeError(message)
    raise ProtocolError(message)
