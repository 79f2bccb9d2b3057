from __future__ import annotations

from .base import AlgorithmBase


class FIFOSchedulingAlgorithm(AlgorithmBase):
    """First-in first-out: the head of the queue goes to the head of the free list."""

    name = "fifo"
    supports_provisioning = False

    def schedule(self) -> None:
        while self.have_free_resources() and self.tasks_in_queue > 0:
            if not self.start_schedule_task(tuple(self._free), self.get_next_task()):
                break
