# dpmn/safety/divergence_guard.py
'''Training divergence guard'''

import logging
from enum import Enum

import numpy as np

from dpmn.errors import DPMNError
from dpmn.observability.tracing import divergence_trips

logger = logging.getLogger(__name__)


class GuardState(Enum):
    CLOSED = "closed"  # normal stepping
    OPEN = "open"  # too many bad steps, training stops
    HALF_OPEN = "half_open"  # a bad step was just skipped


class DivergenceGuard:
    """Skips optimizer steps whose loss or gradients are non-finite.

    After ``failure_threshold`` consecutive skipped steps the guard opens and
    raises ``TrainingDivergedError``; a finite step closes it again.
    """

    def __init__(self, failure_threshold: int = 5, run: str = "train"):
        self.failure_threshold = failure_threshold
        self.run = run
        self.failure_count = 0
        self.skipped_total = 0
        self.state = GuardState.CLOSED

    def check(self, loss: float, grads_finite: bool) -> bool:
        """True if the step may be applied."""
        if self.state == GuardState.OPEN:
            raise TrainingDivergedError(f"divergence guard is OPEN for {self.run}")

        if np.isfinite(loss) and grads_finite:
            if self.state == GuardState.HALF_OPEN:
                logger.info(f"{self.run}: finite step after {self.failure_count} skipped, guard closed")
                self.state = GuardState.CLOSED
            self.failure_count = 0
            return True

        self.failure_count += 1
        self.skipped_total += 1
        divergence_trips.labels(self.run).inc()
        logger.warning(f"{self.run}: skipping non-finite step (loss={loss}, grads_finite={grads_finite})")
        if self.failure_count >= self.failure_threshold:
            self.state = GuardState.OPEN
            raise TrainingDivergedError(
                f"guard OPENED after {self.failure_count} consecutive non-finite steps in {self.run}"
            )
        self.state = GuardState.HALF_OPEN
        return False


class TrainingDivergedError(DPMNError):
    pass
