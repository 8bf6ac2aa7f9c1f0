"""Versioned checkpoint containers for diffractive models and decoders.

Checkpoints are numpy ``.npz`` archives holding a JSON header (geometry,
wavelength plan, loss-free metadata) plus the raw float64 parameter arrays,
so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from .decoder import DecoderMlp
from .dispersion import DispersionModel
from .errors import CheckpointError
from .fields import ApertureMask
from .layers import ThicknessMap
from .model import DetectorGeometry, DiffractiveModel, WavelengthPlan

FORMAT_VERSION = 1


def _save_npz(path, header: dict, arrays: dict) -> None:
    payload = {"header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    payload.update(arrays)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def _load_npz(path):
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "header" not in data:
        raise CheckpointError(f"{path}: missing checkpoint header")
    header = json.loads(bytes(data["header"]).decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {header.get('format_version')}")
    return header, data


def save_model(path, model: DiffractiveModel) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "diffractive_model",
        "pitch": model.pitch,
        "spacings": list(map(float, model.spacings)),
        "si_slab": bool(model.si_slab),
        "has_output_aperture": model.output_aperture is not None,
        "layers": [{"h_base": lay.h_base, "h_range": lay.h_range,
                    "pitch": lay.pitch} for lay in model.layers],
        "plan": {"class_count": model.plan.class_count,
                 "wavelengths_per_class": model.plan.wavelengths_per_class,
                 "mode": model.plan.mode},
        "detector": {"width": model.detector.width,
                     "center": list(model.detector.center),
                     "guard_band": model.detector.guard_band},
        "input_aperture_offset": list(model.input_aperture.offset),
        "output_aperture_offset": list(model.output_aperture.offset)
        if model.output_aperture is not None else [0.0, 0.0],
    }
    arrays = {
        "plan_wavelengths": np.asarray(model.plan.wavelengths),
        "dispersion": np.stack([model.dispersion.wavelengths,
                                model.dispersion.n, model.dispersion.kappa]),
        "input_aperture": np.asarray(model.input_aperture.transmission),
    }
    if model.output_aperture is not None:
        arrays["output_aperture"] = np.asarray(model.output_aperture.transmission)
    for i, lay in enumerate(model.layers):
        arrays[f"latent_{i}"] = lay.latent
    _save_npz(path, header, arrays)


def load_model(path) -> DiffractiveModel:
    header, data = _load_npz(path)
    if header.get("kind") != "diffractive_model":
        raise CheckpointError(f"{path}: not a diffractive model checkpoint")
    plan = WavelengthPlan(header["plan"]["class_count"],
                          header["plan"]["wavelengths_per_class"],
                          data["plan_wavelengths"],
                          header["plan"]["mode"])
    disp = data["dispersion"]
    dispersion = DispersionModel(disp[0], disp[1], disp[2])
    layers = [ThicknessMap(data[f"latent_{i}"].copy(), **meta)
              for i, meta in enumerate(header["layers"])]
    detector = DetectorGeometry(header["detector"]["width"],
                                tuple(header["detector"]["center"]),
                                header["detector"]["guard_band"])
    input_ap = ApertureMask(data["input_aperture"], header["pitch"],
                            tuple(header["input_aperture_offset"]))
    output_ap = None
    if header["has_output_aperture"]:
        output_ap = ApertureMask(data["output_aperture"], header["pitch"],
                                 tuple(header["output_aperture_offset"]))
    return DiffractiveModel(layers=layers, spacings=header["spacings"],
                            input_aperture=input_ap, detector=detector,
                            dispersion=dispersion, plan=plan,
                            pitch=header["pitch"], output_aperture=output_ap,
                            si_slab=header["si_slab"])


def save_decoder(path, net: DecoderMlp) -> None:
    header = {"format_version": FORMAT_VERSION, "kind": "decoder_mlp",
              "head": net.head}
    arrays = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    _save_npz(path, header, arrays)


def load_decoder(path) -> DecoderMlp:
    header, data = _load_npz(path)
    if header.get("kind") != "decoder_mlp":
        raise CheckpointError(f"{path}: not a decoder checkpoint")
    weights = [data[f"w{i}"].copy() for i in range(3)]
    biases = [data[f"b{i}"].copy() for i in range(3)]
    return DecoderMlp(weights, biases, header["head"])
