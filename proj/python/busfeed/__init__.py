"""Bus GPS traces to next-position models and GTFS feeds."""

from ._busfeed import (
    GpsRecord,
    Model,
    StageError,
    Timestamp,
    clean,
    clean_stage,
    evaluate,
    export_gtfs,
    parse_csv,
    predict,
    predict_next,
    rollout,
    run_pipeline,
    simulate,
    train,
    validate_gtfs,
)

__all__ = [
    "GpsRecord",
    "Model",
    "StageError",
    "Timestamp",
    "clean",
    "clean_stage",
    "evaluate",
    "export_gtfs",
    "parse_csv",
    "predict",
    "predict_next",
    "rollout",
    "run_pipeline",
    "simulate",
    "train",
    "validate_gtfs",
]
