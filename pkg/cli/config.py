"""
Configuration d'une expérience: fichier JSON validé par pydantic, surchargé
par les options de la ligne de commande
"""

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator

from src.distributions import (
    CoordKurtosisInput,
    DiscreteInput,
    GaussianInput,
    ProblemSpec,
    input_from_dict,
    parse_noise,
)
from src.errors import InvalidInput
from src.estimators import ErrorFn
from src.settings import OUTPUT_DIR, VERSION, default_workers, env_seed

U64 = 2**64


class SpecConfig(BaseModel):
    """Sérialisation d'un ProblemSpec"""

    model_config = ConfigDict(extra="forbid")

    input: dict
    w_star: Optional[list[float]] = None
    noise: str = "gaussian"
    error: str = "square"


class MinMaxOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    outer_steps: Optional[PositiveInt] = None
    inner_steps: Optional[PositiveInt] = None
    step_size: Optional[PositiveFloat] = None
    tolerance: Optional[PositiveFloat] = None
    init: Optional[Literal["ols", "zero"]] = None

    def as_kwargs(self):
        return self.model_dump(exclude_none=True)


class ExperimentConfig(BaseModel):
    """Paramètres complets d'une exécution"""

    model_config = ConfigDict(extra="forbid")

    command: Literal["fit", "risk", "minimax", "eigen", "var-est", "bounds", "suite"]
    spec: Optional[SpecConfig] = None
    input: Optional[str] = None
    n: PositiveInt = 100
    d: PositiveInt = 2
    delta: float = Field(0.1, gt=0.0, lt=1.0)
    reps: PositiveInt = 20_000
    seed: int = Field(default_factory=env_seed, ge=0, lt=U64)
    sigma2: PositiveFloat = 1.0
    p: Optional[float] = Field(None, gt=2.0)
    estimator: Literal["ols", "minmax"] = "ols"
    noise: Optional[str] = None
    k: Optional[int] = Field(None, ge=1)
    minmax: MinMaxOverrides = Field(default_factory=MinMaxOverrides)
    out: str = OUTPUT_DIR
    workers: PositiveInt = Field(default_factory=default_workers)
    quick: bool = False

    @field_validator("noise")
    @classmethod
    def _noise_readable(cls, value):
        if value is not None:
            try:
                parse_noise(value)
            except InvalidInput as exc:
                raise ValueError(str(exc)) from exc
        return value

    def error_fn(self):
        if self.p is not None:
            return ErrorFn.ppower(self.p)
        if self.spec is not None:
            return ErrorFn.parse(self.spec.error)
        return ErrorFn.square()

    def input_dist(self):
        if self.spec is not None:
            return input_from_dict(self.spec.input)
        return parse_input(self.input or "gaussian", self.d)

    def problem_spec(self):
        """ProblemSpec du fichier, ou gaussien standard en dimension d avec w* = 0"""
        if self.spec is not None:
            spec = ProblemSpec.from_dict(self.spec.model_dump(exclude_none=True), self.sigma2)
            noise = parse_noise(self.noise, self.sigma2) if self.noise else spec.noise
            return ProblemSpec(spec.input, spec.w_star, noise, self.error_fn())
        inp = self.input_dist()
        noise = parse_noise(self.noise or "gaussian", self.sigma2)
        return ProblemSpec(inp, [0.0] * inp.dim, noise, self.error_fn())

    def config_hash(self):
        """Empreinte des paramètres qui déterminent les sorties"""
        payload = self.model_dump(mode="json", exclude={"out", "workers"})
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


class RunManifest(BaseModel):
    """
    Traçabilité d'une exécution

    À graine égale les CSV sont identiques octet par octet, pas le manifeste:
    wall_time_s est la durée mesurée de l'exécution, et config garde out et
    workers. config_hash exclut ces deux champs et reste stable.
    """

    command: str
    config_hash: str
    seed: int
    version: str = VERSION
    wall_time_s: float
    outputs: list[str]
    config: dict


def parse_input(text, d):
    """
    Loi des entrées depuis la ligne de commande: 'gaussian', 'unit', 'bernoulli:ρ',
    'signed-axes', 'coord-kurtosis:κ₁'
    """
    parts = str(text).strip().lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        values = [float(a) for a in args]
    except ValueError as exc:
        raise InvalidInput(f"input: paramètres illisibles dans '{text}'") from exc
    if name == "gaussian" and not values:
        return GaussianInput.standard(d)
    if name == "unit" and not values:
        return DiscreteInput.unit()
    if name == "bernoulli" and len(values) == 1:
        return DiscreteInput.bernoulli(values[0])
    if name == "signed-axes" and not values:
        return DiscreteInput.signed_axes(d)
    if name == "coord-kurtosis" and len(values) == 1:
        return CoordKurtosisInput(d, values[0])
    raise InvalidInput(f"input: loi inconnue '{text}'")


def describe_validation_error(exc):
    """Premier problème d'une ValidationError, avec la clé fautive"""
    first = exc.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "<racine>"
    return f"clé '{key}': {first['msg']}"


def load_config(command, path=None, overrides=None):
    """
    Fusionne le fichier JSON (optionnel) et les options, puis valide

    Raises:
        InvalidInput: fichier illisible ou commande incohérente
        ValidationError: schéma invalide (clé inconnue, valeur hors plage)
    """
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"config: lecture impossible de '{path}' ({exc})") from exc
        if not isinstance(data, dict):
            raise InvalidInput("config: le document doit être un objet JSON")
        if data.get("command", command) != command:
            raise InvalidInput(f"config: clé 'command' vaut '{data['command']}', commande lancée '{command}'")
    data["command"] = command
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return ExperimentConfig.model_validate(data)
