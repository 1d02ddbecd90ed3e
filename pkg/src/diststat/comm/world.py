"""Launching an SPMD world: run one program per rank and join them all."""

import itertools
import logging
import multiprocessing
import multiprocessing.connection
import threading
import time
import traceback

from ..errors import PeerLost, WorldAborted, WorldError
from .inproc import InprocCommunicator, Mesh
from .multiproc import SocketCommunicator, socket_mesh

log = logging.getLogger(__name__)

BACKENDS = ("inproc", "multiproc")
_GRACE = 2.0


def spawn_world(world_size, program, *args, backend="inproc", **kwargs):
    """Run ``program(comm, *args, **kwargs)`` once per rank.

    Returns the per-rank return values in rank order.  If any rank raises,
    the remaining ranks are aborted and a :class:`WorldError` naming the
    first failing rank is raised.
    """
    if world_size < 1:
        raise ValueError(f"world_size must be >= 1, got {world_size}")
    if backend == "inproc":
        return _spawn_threads(world_size, program, args, kwargs)
    if backend == "multiproc":
        return _spawn_processes(world_size, program, args, kwargs)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def _spawn_threads(world_size, program, args, kwargs):
    mesh = Mesh(world_size)
    results = [None] * world_size
    failures = []
    order = itertools.count()
    lock = threading.Lock()

    def run(rank):
        comm = InprocCommunicator(rank, mesh)
        try:
            results[rank] = program(comm, *args, **kwargs)
        except BaseException as exc:  # noqa: BLE001 - reported through WorldError
            with lock:
                failures.append((next(order), rank, exc, traceback.format_exc()))
            mesh.abort.set()
        finally:
            mesh.mark_done(rank)

    if world_size == 1:
        run(0)
    else:
        threads = [
            threading.Thread(target=run, args=(r,), name=f"rank-{r}", daemon=True)
            for r in range(world_size)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    if failures:
        primary = [f for f in failures if not isinstance(f[2], WorldAborted)] or failures
        _, rank, exc, tb = min(primary, key=lambda f: f[0])
        log.debug("rank %d traceback:\n%s", rank, tb)
        raise WorldError(rank, f"{type(exc).__name__}: {exc}") from exc
    return results


def _child(rank, world_size, mesh, program, args, kwargs, conn):
    peers = mesh[rank]
    for r, ends in enumerate(mesh):
        if r != rank:
            for sock in ends.values():
                sock.close()
    comm = None
    try:
        comm = SocketCommunicator(rank, world_size, peers)
        result = program(comm, *args, **kwargs)
        conn.send(("ok", result))
    except BaseException as exc:  # noqa: BLE001
        secondary = isinstance(exc, (PeerLost, WorldAborted))
        conn.send(("err", f"{type(exc).__name__}: {exc}", traceback.format_exc(), secondary))
    finally:
        if comm is not None:
            comm.close()
        conn.close()


def _spawn_processes(world_size, program, args, kwargs):
    ctx = multiprocessing.get_context("fork")
    mesh = socket_mesh(world_size)
    readers, procs = [], []
    for rank in range(world_size):
        recv_end, send_end = ctx.Pipe(duplex=False)
        proc = ctx.Process(
            target=_child,
            args=(rank, world_size, mesh, program, args, kwargs, send_end),
            name=f"rank-{rank}",
            daemon=True,
        )
        proc.start()
        send_end.close()
        readers.append(recv_end)
        procs.append(proc)
    for ends in mesh:
        for sock in ends.values():
            sock.close()

    results = [None] * world_size
    pending = dict(zip(readers, range(world_size)))
    failures = []
    deadline = None
    try:
        while pending:
            timeout = None if deadline is None else max(0.0, deadline - time.monotonic())
            ready = multiprocessing.connection.wait(list(pending), timeout)
            if not ready:
                break
            for reader in ready:
                rank = pending.pop(reader)
                try:
                    msg = reader.recv()
                except EOFError:
                    msg = ("err", "process exited without reporting a result", "", False)
                if msg[0] == "ok":
                    results[rank] = msg[1]
                    continue
                failures.append((rank, msg))
                if deadline is None:
                    # give the other ranks a moment to report, so the root cause wins
                    deadline = time.monotonic() + _GRACE
    finally:
        for proc in procs:
            if proc.is_alive() and failures:
                proc.terminate()
            proc.join()
        for reader in readers:
            reader.close()
    if failures:
        primary = [f for f in failures if not f[1][3]] or failures
        rank, msg = primary[0]
        log.debug("rank %d traceback:\n%s", rank, msg[2])
        raise WorldError(rank, msg[1])
    return results
