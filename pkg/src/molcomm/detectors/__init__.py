from .base import Detector, Standardizer
from .baseline import BaselineDetector, BaselineParams, baseline_detect, search_baseline
from .checkpoint import ALL_DETECTORS, load_detector, save_detector
from .networks import (DETECTORS, BaseNetDetector, CNNLSTM3Detector, CNNNetDetector, LSTM3Detector,
                       SBLSTM3Detector)
from .sbrnn import SbrnnState, StreamUpdate, sbrnn_detect_stream, sbrnn_push, window_count, window_starts

__all__ = [
    "Detector", "Standardizer", "BaselineDetector", "BaselineParams", "baseline_detect",
    "search_baseline", "ALL_DETECTORS", "load_detector", "save_detector", "DETECTORS",
    "BaseNetDetector", "CNNLSTM3Detector", "CNNNetDetector", "LSTM3Detector", "SBLSTM3Detector",
    "SbrnnState", "StreamUpdate", "sbrnn_detect_stream", "sbrnn_push", "window_count", "window_starts",
]
