"""SPMD execution harness and blocking collective communication."""

from .base import Communicator, Kind
from .inproc import InprocCommunicator, local_comm
from .multiproc import SocketCommunicator
from .world import BACKENDS, spawn_world

__all__ = [
    "BACKENDS",
    "Communicator",
    "InprocCommunicator",
    "Kind",
    "SocketCommunicator",
    "local_comm",
    "spawn_world",
]
