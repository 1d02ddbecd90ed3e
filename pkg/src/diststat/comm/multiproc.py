"""Multi-process backend over stream sockets.

Wire format, one frame per message::

    [u32 payload length][u8 message kind][payload]

little-endian throughout.  Kinds are the seven collectives, the handshake
(payload ``<II`` rank, world size) and an error frame used by rank 0 to
abort a collective whose headers disagree.
"""

import socket
import struct

from ..errors import PeerLost, ProtocolError
from .base import Communicator, Kind

FRAME_HEADER = struct.Struct("<IB")
HANDSHAKE = struct.Struct("<II")


def encode_frame(kind, payload):
    return FRAME_HEADER.pack(len(payload), int(kind)) + payload


def _read_exact(sock, n):
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise PeerLost("peer closed the connection")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock):
    length, kind = FRAME_HEADER.unpack(_read_exact(sock, FRAME_HEADER.size))
    payload = _read_exact(sock, length) if length else b""
    return kind, payload


class SocketCommunicator(Communicator):
    backend = "multiproc"

    def __init__(self, rank, world_size, peers):
        super().__init__(rank, world_size)
        self._peers = peers
        self._handshake()

    def _handshake(self):
        hello = HANDSHAKE.pack(self.rank, self.world_size)
        for dst in sorted(self._peers):
            self._send_frame(dst, Kind.HANDSHAKE, hello)
        for src in sorted(self._peers):
            kind, payload = read_frame(self._peers[src])
            if kind != Kind.HANDSHAKE:
                raise ProtocolError(f"rank {self.rank}: expected handshake from rank {src}")
            peer_rank, peer_size = HANDSHAKE.unpack(payload)
            if peer_rank != src or peer_size != self.world_size:
                raise ProtocolError(
                    f"rank {self.rank}: handshake mismatch from rank {src} "
                    f"(claims rank {peer_rank} of {peer_size})"
                )

    def _send_frame(self, dst, kind, payload):
        try:
            self._peers[dst].sendall(encode_frame(kind, payload))
        except OSError as exc:
            raise ProtocolError(f"rank {self.rank}: send to rank {dst} failed: {exc}") from exc

    def _recv_frame(self, src):
        return read_frame(self._peers[src])

    def close(self):
        for sock in self._peers.values():
            try:
                sock.close()
            except OSError:
                pass


def socket_mesh(world_size):
    """Full mesh of connected socket pairs: ``mesh[r][peer]`` is rank r's end."""
    mesh = [dict() for _ in range(world_size)]
    for a in range(world_size):
        for b in range(a + 1, world_size):
            sa, sb = socket.socketpair()
            mesh[a][b] = sa
            mesh[b][a] = sb
    return mesh
