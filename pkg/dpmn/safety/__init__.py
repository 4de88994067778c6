from dpmn.safety.divergence_guard import DivergenceGuard, GuardState, TrainingDivergedError

__all__ = ["DivergenceGuard", "GuardState", "TrainingDivergedError"]
