"""Attribute-guided layout-to-image generation.

Layouts travel as dicts in the layout-file format; errors raise
``attrgan.Error`` with ``args == (code, message)``.
"""

import base64
import json

from . import _core
from ._core import (
    Error,
    attr_class_loss,
    attribute_recall_precision,
    discriminator_total,
    frechet_distance,
    generator_total,
    image_recon_loss,
    kl_loss,
    latent_recon_loss,
    obj_class_loss,
    object_accuracy,
    synthetic_vocabularies,
)

__all__ = [
    "Error",
    "Model",
    "attr_class_loss",
    "attribute_recall_precision",
    "discriminator_total",
    "frechet_distance",
    "generate_synthetic_dataset",
    "generator_total",
    "image_recon_loss",
    "kl_loss",
    "latent_recon_loss",
    "normalize_layout",
    "obj_class_loss",
    "object_accuracy",
    "render_synthetic",
    "sample_synthetic_layout",
    "shift_layout",
    "synthetic_vocabularies",
    "train",
]


def _vocab(vocab):
    return vocab if vocab is not None else synthetic_vocabularies()


def normalize_layout(layout, vocab=None):
    cats, attrs = _vocab(vocab)
    return json.loads(_core.normalize_layout(json.dumps(layout), cats, attrs))


def shift_layout(layout, dx, policy="clamp", vocab=None):
    cats, attrs = _vocab(vocab)
    return json.loads(_core.shift_layout(json.dumps(layout), cats, attrs, list(dx), policy))


def render_synthetic(layout):
    """uint8 array [H, W, 3]."""
    return _core.render_synthetic(json.dumps(layout))


def sample_synthetic_layout(seed=0, spec=None):
    return json.loads(_core.sample_synthetic_layout(json.dumps(spec) if spec else "", seed))


def generate_synthetic_dataset(out_dir, n, spec=None):
    return _core.generate_synthetic_dataset(json.dumps(spec) if spec else "", n, str(out_dir))


def train(data_dir, out_dir, preset="desk", config=None):
    _core.train(str(data_dir), str(out_dir), preset, json.dumps(config) if config else "")


class Model:
    """In-process view of the HTTP service for one checkpoint."""

    def __init__(self, checkpoint, classifier=None):
        self._service = _core.Service(str(checkpoint), None if classifier is None else str(classifier))

    def request(self, method, path, body=None):
        status, text = self._service.handle(method, path, "" if body is None else json.dumps(body))
        reply = json.loads(text)
        if status != 200:
            err = reply["error"]
            raise Error(err["code"], err["message"])
        return reply

    def generate(self, layout, seeds=None, attributes=None, seed=0, sample_count=2):
        body = {"v": 1, "layout": layout, "seed": seed, "sample_count": sample_count}
        if seeds is not None:
            body["seeds"] = seeds
        if attributes is not None:
            body["attributes"] = attributes
        return self.request("POST", "/generate", body)

    def generate_pair(self, layout, dx, policy="clamp", **kwargs):
        body = {"v": 1, "layout": layout, "shifts": {"dx": list(dx), "policy": policy}}
        body.update(kwargs)
        return self.request("POST", "/generate/pair", body)

    def vocab(self):
        return self.request("GET", "/vocab")

    def info(self):
        return self.request("GET", "/model")

    @staticmethod
    def png_bytes(response):
        return base64.b64decode(response["image"])
