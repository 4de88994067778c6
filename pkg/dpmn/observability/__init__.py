from dpmn.observability.tracing import (
    current_loss,
    divergence_trips,
    registry,
    samples_evaluated,
    step_latency,
    steps_taken,
    tracer,
)

__all__ = [
    "current_loss",
    "divergence_trips",
    "registry",
    "samples_evaluated",
    "step_latency",
    "steps_taken",
    "tracer",
]
