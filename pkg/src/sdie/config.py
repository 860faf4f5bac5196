"""Run configuration stored as a flat ``key = value`` text file."""
import dataclasses
from dataclasses import dataclass, fields

from .exceptions import InputError
from .expsolver import B_METHODS, SCHEMES, PropagatorConfig
from .engine import SdieParams
from .imgpipe import PIXEL_SCALES

NORMALIZATIONS = ("symmetric", "random_walk")
BUILTINS = ("pair40", "pair20", "pair8")


@dataclass
class RunConfig:
    """All knobs of a segmentation run.

    Defaults follow the two-image segmentation setup: ``eps = tau = 0.003``
    (MBO), ``mu_hat = 30``, ``sigma = 35``, ``k = k_b = 1``,
    ``delta = 1e-10``, ``K = 70`` and the symmetric normalised Laplacian.
    ``K = 0`` requests the exact (full-rank) decomposition.
    """

    eps: float = 0.003
    tau: float = 0.003
    delta: float = 1e-10
    max_iter: int = 500
    scheme: str = "strang"
    k: int = 1
    k_b: int = 1
    b_method: str = "ode_euler"
    m: int = 1
    mu_hat: float = 30.0
    sigma: float = 35.0
    pixel_scale: str = "byte"
    K: int = 70
    normalization: str = "symmetric"
    seed: int = 0
    builtin: str = ""
    noise: float = 0.05
    ref_image: str = ""
    ref_labels: str = ""
    target_image: str = ""
    ground_truth: str = ""
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            ("scheme", self.scheme in SCHEMES),
            ("b_method", self.b_method in B_METHODS),
            ("pixel_scale", self.pixel_scale in PIXEL_SCALES),
            ("normalization", self.normalization in NORMALIZATIONS),
            ("builtin", self.builtin in ("",) + BUILTINS),
            ("K", self.K >= 0 and self.K != 1),
            ("mu_hat", self.mu_hat > 0),
            ("sigma", self.sigma > 0),
            ("noise", self.noise >= 0),
        ]
        for key, ok in checks:
            if not ok:
                raise InputError(f"invalid value for {key}: "
                                 f"{getattr(self, key)!r}")
        try:
            self.sdie_params()
            self.propagator_config()
        except InputError as exc:
            raise InputError(f"invalid scheme parameters: {exc}") from exc

    def sdie_params(self):
        return SdieParams(self.eps, self.tau, self.delta, self.max_iter)

    def propagator_config(self):
        return PropagatorConfig(tau=self.tau, scheme=self.scheme, k=self.k,
                                k_b=self.k_b, b_method=self.b_method,
                                m=self.m)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_text(self):
        lines = [f"{f.name} = {getattr(self, f.name)!s}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in mapping.items():
            if key not in known:
                raise InputError(f"unknown config key {key!r}")
            values[key] = _convert(key, known[key].type, raw)
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        mapping = parse_text(text)
        mapping.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(mapping)


def parse_text(text):
    mapping = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {number} is not 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        mapping[key] = value
    return mapping


def _convert(key, kind, raw):
    if not isinstance(raw, str):
        return raw
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise InputError(f"config key {key!r} expects {kind}, got {raw!r}")
    return raw
