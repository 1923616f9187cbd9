# File: app/services/channel.py
"""
Public classical channel between Alice and Bob.

Ordered, reliable and authenticated by assumption. The protocol only talks
to the ClassicalChannel interface, so a network transport can replace the
in-memory log.
"""

import logging
import threading
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from app.models.models import ChannelMessage, Party

logger = logging.getLogger(__name__)


class MessageKind:
    BASIS_ANNOUNCEMENT = "basis_announcement"
    SAMPLE_INDICES = "sample_indices"
    SAMPLE_BITS = "sample_bits"
    PARITY_DECISION = "x_parity"
    QBER_RESULT = "qber_result"
    ABORT = "abort"


class ClassicalChannel(ABC):
    """Interface of the public channel"""

    @abstractmethod
    def send(self, sender: Party, kind: str, payload: Optional[Dict[str, Any]] = None) -> ChannelMessage:
        ...

    @abstractmethod
    def transcript(self) -> List[ChannelMessage]:
        """Every message sent so far, in send order"""

    def messages_of(self, kind: str) -> List[ChannelMessage]:
        return [m for m in self.transcript() if m.kind == kind]


class InMemoryChannel(ClassicalChannel):
    """
    Message log held in process memory
    """

    def __init__(self):
        self._messages: List[ChannelMessage] = []
        self._lock = threading.Lock()

    def send(self, sender: Party, kind: str, payload: Optional[Dict[str, Any]] = None) -> ChannelMessage:
        with self._lock:
            message = ChannelMessage(seq=len(self._messages), sender=sender, kind=kind, payload=payload or {})
            self._messages.append(message)
        logger.debug(f"[{message.seq}] {sender.value} -> {kind}")
        return message

    def transcript(self) -> List[ChannelMessage]:
        with self._lock:
            return list(self._messages)

    def __len__(self) -> int:
        return len(self._messages)
