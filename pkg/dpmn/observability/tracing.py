'''OpenTelemetry spans and Prometheus metrics for training and evaluation'''

from opentelemetry import trace
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram

# no-op unless an SDK tracer provider is installed by the caller
tracer = trace.get_tracer(__name__)

registry = CollectorRegistry()

step_latency = Histogram(
    'dpmn_train_step_seconds',
    'Wall time of one optimizer step',
    ['run'],
    registry=registry,
)

steps_taken = Counter(
    'dpmn_train_steps_total',
    'Optimizer steps applied',
    ['run'],
    registry=registry,
)

current_loss = Gauge(
    'dpmn_train_loss',
    'Most recent mini-batch loss',
    ['run'],
    registry=registry,
)

divergence_trips = Counter(
    'dpmn_divergence_skips_total',
    'Steps skipped by the divergence guard',
    ['run'],
    registry=registry,
)

samples_evaluated = Counter(
    'dpmn_eval_samples_total',
    'Samples pushed through evaluation',
    ['system'],
    registry=registry,
)
