"""Rebuild the bundled smoke checkpoints: ``python -m molcomm.smoke [out_dir]``.

All six detectors are trained on one desk-scale PDE dataset (every symbol
duration, 24 sequences of 120 bits each) at the reference noise level.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

from .channel import ChannelParams
from .detectors import (BaseNetDetector, BaselineDetector, CNNLSTM3Detector, CNNNetDetector,
                        LSTM3Detector, SBLSTM3Detector, save_detector)
from .framing import STANDARD_SPECS
from .pipeline import TrainConfig, generate_dataset, train

REFERENCE_NOISE = 0.05
SMOKE_SEED = 2024

log = logging.getLogger(__name__)


def build_smoke_models(out_dir, n=24, k=120, epochs=200, seed=SMOKE_SEED, noise=REFERENCE_NOISE):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = generate_dataset(ChannelParams(noise_std=noise), STANDARD_SPECS, n, k, seed)
    cfg = TrainConfig(epochs=epochs, seed=seed)
    written = []
    baseline = BaselineDetector().fit(data.X, data.y)
    written.append(save_detector(baseline, out_dir / "baseline.mcnn"))
    cnn, _ = train(CNNNetDetector(), data, cfg)
    written.append(save_detector(cnn, out_dir / "cnn-net.mcnn"))
    for name, template in (("base-net", BaseNetDetector()), ("lstm3-net", LSTM3Detector()),
                           ("cnn-lstm3-net", CNNLSTM3Detector(cnn=cnn)),
                           ("sblstm3-net", SBLSTM3Detector())):
        model, curve = train(template, data, cfg)
        log.info("%s final loss %.5f", name, curve[-1] if curve else float("nan"))
        written.append(save_detector(model, out_dir / f"{name}.mcnn"))
    return written


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    target = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "data"
    for path in build_smoke_models(target):
        print(path)
