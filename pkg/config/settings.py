"""Application configuration via environment variables.

Configuration is loaded from .env file in the project root, or from the current
environment, using the RIGTRACK_ prefix. Nested sections use a double underscore,
e.g. RIGTRACK_TRACKER__K=16. A JSON configuration document passed on the command
line is merged on top of the environment.

The Settings class performs strict validation and will raise errors on invalid
configuration.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import MalformedDocumentError, MissingFileError

BASE_DIR = Path(__file__).resolve().parents[1]


class RectifierConfig(BaseModel):
    """Levenberg-Marquardt rectifier parameters."""

    max_iterations: int = Field(default=50, gt=0, description="Maximum LM trial steps")
    initial_damping: float = Field(default=1e-3, gt=0)
    damping_up: float = Field(default=10.0, gt=1, description="Damping multiplier on rejection")
    damping_down: float = Field(default=0.3, gt=0, lt=1, description="Damping multiplier on acceptance")
    tolerance: float = Field(default=1e-9, gt=0, description="Relative cost change for convergence")
    max_consecutive_rejections: int = Field(default=10, gt=0)
    robust_delta: float = Field(default=0.05, gt=0, description="Huber scale in meters")
    samples_per_pair: int = Field(default=512, ge=16)
    lambda_intrinsics: float = Field(default=1e-2, gt=0)
    lambda_pose: float = Field(default=1e-3, gt=0)
    lambda_depth: float = Field(default=0.01, gt=0)
    outlier_rounds: int = Field(default=3, gt=0, description="Solve / re-select passes over the samples")
    outlier_floor: float = Field(default=2.0, gt=0, description="Smallest inlier bound, in multiples of robust_delta")
    outlier_sigmas: float = Field(default=3.0, gt=0, description="Inlier bound in robust standard deviations")
    seed: int = Field(default=0, ge=0)
    init_radius: float = Field(default=3.0, gt=0, description="Camera circle radius without pose hints")
    init_height: float = Field(default=2.0, gt=0, description="Camera height without pose hints")
    init_focal_ratio: float = Field(default=0.6, gt=0, description="fx = fy = ratio * width without K hints")


class TrackerConfig(BaseModel):
    """Mean-shift tracker parameters."""

    k: int = Field(default=32, gt=0, description="Neighbourhood size")
    sigma_spatial: float = Field(default=0.05, gt=0, description="Spatial kernel width in meters")
    sigma_feature: float = Field(default=0.3, gt=0)
    iterations: int = Field(default=4, gt=0)
    visibility_threshold: float = Field(default=0.5, gt=0, lt=1)
    feature_blend: float = Field(default=0.1, ge=0, le=1)
    velocity_decay: float = Field(default=0.9, ge=0, le=1, description="Velocity factor while coasting")
    velocity_gate: float = Field(
        default=0.5, gt=0, description="Largest velocity change accepted per frame, in multiples of sigma_spatial"
    )


class FusionConfig(BaseModel):
    """Feature cloud construction parameters."""

    stride: int = Field(default=2, gt=0)
    patch_size: int = Field(default=7, gt=0)
    leaf_size: int = Field(default=16, gt=0)

    @field_validator("patch_size")
    @classmethod
    def patch_size_must_be_odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("patch_size must be odd so the patch is centred on its pixel")
        return v


class EvaluationConfig(BaseModel):
    """Distance thresholds (meters) for AJ and delta_avg."""

    thresholds: Tuple[float, ...] = (0.01, 0.02, 0.04, 0.08, 0.16)

    @field_validator("thresholds")
    @classmethod
    def thresholds_ascending(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v:
            raise ValueError("at least one threshold is required")
        if any(t <= 0 for t in v):
            raise ValueError("thresholds must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("thresholds must be strictly ascending")
        return v


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class Settings(BaseSettings):
    """Core settings loaded from environment, .env file, or a JSON document."""

    debug: bool = Field(default=False, description="Enable debug logging (optimization trace)")
    log_file: Optional[Path] = Field(default=None, description="Optional rotating log file")
    threads: int = Field(default=1, description="Worker threads for per-view and per-query work")
    seed: int = Field(default=0, ge=0, description="Default seed for every random draw")

    rectifier: RectifierConfig = Field(default_factory=RectifierConfig)
    tracker: TrackerConfig = Field(default_factory=TrackerConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    model_config = SettingsConfigDict(
        env_prefix="RIGTRACK_",
        env_file=BASE_DIR / ".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="ignore",  # Ignore extra environment variables not in the model
    )

    @field_validator("threads")
    @classmethod
    def threads_must_be_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("threads must be >= 1")
        return v

    @model_validator(mode="after")
    def rectifier_seed_follows_run_seed(self) -> "Settings":
        """A run seed set without an explicit rectifier seed seeds the rectifier too."""
        if "seed" not in self.rectifier.model_fields_set and self.seed:
            self.rectifier = self.rectifier.model_copy(update={"seed": self.seed})
        return self

    @classmethod
    def from_document(cls, path: Union[str, Path], **overrides: Any) -> "Settings":
        """Load settings with a JSON document merged over the environment.

        Args:
            path: JSON document with any subset of the settings fields
            overrides: Final keyword overrides (e.g. from CLI flags)

        Raises:
            MissingFileError: If the document does not exist
            MalformedDocumentError: If it is not valid JSON or fails validation
        """
        path = Path(path)
        if not path.exists():
            raise MissingFileError(path)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise MalformedDocumentError(path, f"invalid JSON: {e}") from e
        if not isinstance(document, dict):
            raise MalformedDocumentError(path, "configuration document must be an object")
        base = cls().model_dump(exclude_unset=True)
        merged = _deep_merge(_deep_merge(base, document), overrides)
        try:
            return cls(**merged)
        except ValidationError as e:
            raise MalformedDocumentError(path, str(e)) from e

    def validate_at_startup(self, output_dir: Optional[Path] = None) -> None:
        """Perform runtime validation of configuration.

        Args:
            output_dir: Directory the command will write to, created if missing

        Raises:
            ValueError: If configuration is invalid
        """
        if self.threads > 256:
            raise ValueError(f"threads={self.threads} is not a sane worker count")
        if self.log_file is not None:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
        if output_dir is not None:
            output_dir = Path(output_dir)
            if output_dir.exists() and not output_dir.is_dir():
                raise ValueError(f"output path {output_dir} exists and is not a directory")
            output_dir.mkdir(parents=True, exist_ok=True)


settings = Settings()
