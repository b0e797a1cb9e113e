"""Flat key-value run configuration with content hashing."""

import hashlib
import os

DEFAULTS = {
    "seed": 0,
    "resolution": 128,           # input voxel resolution
    "out_resolution": 256,       # dense retrieval resolution
    "partiality": "t2",
    "atlas_size": 2048,

    "fixtures.count": 5,
    "fixtures.eval_count": 3,
    "fixtures.atlas_size": 256,

    "holes.count": 5,
    "holes.radius_min": 0.06,
    "holes.radius_max": 0.14,

    "train.epochs": 54,
    "train.learning_rate": 1e-4,
    "train.subsample": 50000,
    "train.bank_size": 100000,
    "train.batch_size": 4,
    "train.base_channels": 16,
    "train.decoder_hidden": "512,256,256",
    "train.target": "joint",     # joint | inpainter | both

    "inpaint.iterations": 330000,
    "inpaint.learning_rate": 1e-4,
    "inpaint.base_channels": 64,
    "inpaint.channel_cap": 512,
    "inpaint.log_every": 100,

    "refine.max_distance": 0.02,
    "refine.mode": "full",       # full | no_coarse_masks | bilinear | no_partial_conv

    "complete.threshold": 0.5,
    "complete.chunk": 32768,
    "complete.voxel_samples": 100000,

    "evaluate.samples": 5000,
    "evaluate.d0_shape": 0.05,
    "evaluate.d0_texture": 0.25,
}


def _coerce(text):
    text = text.strip()
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


class Config:
    """Dotted flat keys over defaults; unknown keys are allowed."""

    def __init__(self, values=None):
        self.values = dict(DEFAULTS)
        if values:
            for k, v in values.items():
                self.values[k] = _coerce(v) if isinstance(v, str) else v

    @classmethod
    def load(cls, path):
        values = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected KEY = VALUE")
                key, val = line.split("=", 1)
                values[key.strip()] = _coerce(val)
        return cls(values)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, value):
        self.values[key] = value

    def override(self, **kwargs):
        for key, value in kwargs.items():
            if value is not None:
                self.values[key.replace("__", ".")] = value
        return self

    def ints(self, key):
        return tuple(int(x) for x in str(self[key]).split(","))

    def canonical_text(self):
        return "\n".join(f"{k} = {self.values[k]}" for k in sorted(self.values)) + "\n"

    def hash(self, extra=""):
        digest = hashlib.sha256((self.canonical_text() + extra).encode()).hexdigest()
        return digest[:12]

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.canonical_text())

    def copy(self):
        return Config(dict(self.values))
