"""Human-annotation backend: file-backed store plus HTTP service."""

from .store import (
    AnnotationStore,
    BenchmarkItem,
    ConflictError,
    ItemState,
    Step,
    StepSubmission,
    StoreError,
    ValidationFailure,
    load_benchmark,
)

__all__ = [
    "AnnotationStore",
    "BenchmarkItem",
    "ConflictError",
    "ItemState",
    "Step",
    "StepSubmission",
    "StoreError",
    "ValidationFailure",
    "load_benchmark",
]
