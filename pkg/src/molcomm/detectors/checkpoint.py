"""Save and restore trained detectors in the ``MCNN`` container (see :mod:`molcomm.io`).

Header ``meta`` fields: ``architecture`` (detector tag), ``params`` (the
estimator's constructor arguments), ``layers`` (``[{"kind", "config"}]``),
and ``cnn`` (nested meta of the frozen CNN for CNN-LSTM3).  Arrays are
``norm/mean``, ``norm/scale`` and ``L{i}/{param}`` per layer, with a
``cnn/`` prefix for the nested CNN.  Baseline checkpoints carry only
``params`` with the tuned ``n_bins`` and ``gamma``.
"""

from __future__ import annotations

import numpy as np

from .. import io
from ..nn import Network
from ..nn.layers import LAYER_KINDS
from .base import Standardizer
from .baseline import BaselineDetector
from .networks import DETECTORS, CNNLSTM3Detector, NetworkDetector

ALL_DETECTORS = {"baseline": BaselineDetector, **DETECTORS}


def _network_state(det: NetworkDetector, prefix=""):
    params = {k: v for k, v in det.get_params(deep=False).items() if k != "cnn"}
    meta = {
        "architecture": det.architecture,
        "params": params,
        "layers": [{"kind": layer.kind, "config": layer.config()} for layer in det.network_.layers],
    }
    arrays = [(prefix + "norm/mean", det.normalizer_.mean), (prefix + "norm/scale", det.normalizer_.scale)]
    for i, name, arr in det.network_.parameters():
        arrays.append((f"{prefix}L{i}/{name}", arr))
    if isinstance(det, CNNLSTM3Detector):
        cnn_meta, cnn_arrays = _network_state(det.cnn_, prefix + "cnn/")
        meta["cnn"] = cnn_meta
        arrays += cnn_arrays
    return meta, arrays


def _restore_network(meta, arrays, prefix=""):
    cls = DETECTORS[meta["architecture"]]
    det = cls(**meta["params"])
    layers = [LAYER_KINDS[spec["kind"]](**spec["config"]) for spec in meta["layers"]]
    for i, layer in enumerate(layers):
        for name in layer.params:
            key = f"{prefix}L{i}/{name}"
            if key not in arrays:
                raise io.ContainerError(f"checkpoint lacks array {key!r}")
            if arrays[key].shape != layer.params[name].shape:
                raise io.ContainerError(f"{key}: shape {arrays[key].shape} != {layer.params[name].shape}")
            layer.params[name] = arrays[key].copy()
    det.network_ = Network(layers)
    det.normalizer_ = Standardizer(arrays[prefix + "norm/mean"], arrays[prefix + "norm/scale"])
    det.loss_curve_ = None
    if "cnn" in meta:
        det.cnn_ = _restore_network(meta["cnn"], arrays, prefix + "cnn/")
    return det


def save_detector(det, path):
    if isinstance(det, BaselineDetector):
        if not hasattr(det, "params_"):
            raise ValueError("detector is not fitted")
        meta = {"architecture": "baseline",
                "params": {"n_bins": det.params_.n_bins, "gamma": det.params_.gamma}}
        return io.write_container(path, io.MAGIC_MODEL, meta, [])
    if not hasattr(det, "network_"):
        raise ValueError("detector is not fitted")
    meta, arrays = _network_state(det)
    return io.write_container(path, io.MAGIC_MODEL, meta, arrays)


def load_detector(path):
    meta, arrays = io.read_container(path, io.MAGIC_MODEL)
    arch = meta.get("architecture")
    if arch not in ALL_DETECTORS:
        raise io.ContainerError(f"{path}: unknown detector architecture {arch!r}")
    if arch == "baseline":
        return BaselineDetector(**meta["params"]).fit(None)
    return _restore_network(meta, arrays)
