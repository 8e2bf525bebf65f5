from .kalman import KalmanConfig, KalmanFilter, KalmanState, kalman_predict, kalman_update
from .lap import FORBIDDEN, hungarian
from .tracker import (
    Detection,
    Track,
    TrackedObject,
    Tracker,
    TrackerConfig,
    TrackStatus,
    cost_matrix,
    init_tracks,
    match_frame,
    select_top_k,
    track_sequence,
)

__all__ = [
    "FORBIDDEN",
    "Detection",
    "KalmanConfig",
    "KalmanFilter",
    "KalmanState",
    "Track",
    "TrackStatus",
    "TrackedObject",
    "Tracker",
    "TrackerConfig",
    "cost_matrix",
    "hungarian",
    "init_tracks",
    "kalman_predict",
    "kalman_update",
    "match_frame",
    "select_top_k",
    "track_sequence",
]
