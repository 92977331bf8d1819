import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from speaker_fusion._exceptions import ConfigInvalidError

FEATURE_SETS = ("F1", "F2", "F3", "F4", "F5")
SYSTEMS = (1, 2, 3)
FUSION_RULES = ("sum", "product", "max")


@dataclass(frozen=True)
class FrontendConfig:
    """Front-end tuning symbols for framing, MFCC and RASTA-PLP"""

    window_ms: float = 16.0
    hop_ms: float = 8.0
    pre_emphasis: float = 0.97
    n_mel_filters: int = 26
    fft_size: int = 512
    mel_low_hz: float = 300.0
    mel_high_hz: float = 8000.0
    n_bark_bands: int = 21
    plp_model_order: int = 12
    rasta_pole: float = 0.98
    delta_width: int = 2
    log_floor: float = 1e-10
    drop_silent_frames: bool = False
    silence_threshold_db: float = 40.0

    def __post_init__(self):
        if not self.window_ms >= self.hop_ms > 0:
            raise ConfigInvalidError("window_ms must be >= hop_ms > 0")
        if not 0 <= self.pre_emphasis < 1:
            raise ConfigInvalidError("pre_emphasis must lie in [0, 1)")
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ConfigInvalidError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.n_mel_filters < 13:
            raise ConfigInvalidError("n_mel_filters must be >= 13 to yield c1..c12")
        if not 0 <= self.mel_low_hz < self.mel_high_hz:
            raise ConfigInvalidError("mel band edges must satisfy 0 <= low < high")
        if self.plp_model_order != 12:
            raise ConfigInvalidError("plp_model_order must be 12 (13 cepstra)")
        if self.n_bark_bands <= self.plp_model_order:
            raise ConfigInvalidError("n_bark_bands must exceed plp_model_order")
        if not 0 < self.rasta_pole < 1:
            raise ConfigInvalidError("rasta_pole must lie in (0, 1)")
        if self.delta_width < 1:
            raise ConfigInvalidError("delta_width must be >= 1")
        if self.log_floor <= 0:
            raise ConfigInvalidError("log_floor must be positive")
        if self.silence_threshold_db <= 0:
            raise ConfigInvalidError("silence_threshold_db must be positive")


@dataclass(frozen=True)
class EmConfig:
    """UBM training parameters"""

    n_components: int = 128
    max_iterations: int = 100
    log_likelihood_rel_tol: float = 1e-6
    variance_floor_factor: float = 0.01
    rng_seed: int = 0
    init_method: str = "kmeans++"

    def __post_init__(self):
        if self.n_components < 1:
            raise ConfigInvalidError("n_components must be >= 1")
        if self.max_iterations < 1:
            raise ConfigInvalidError("max_iterations must be >= 1")
        if self.log_likelihood_rel_tol <= 0:
            raise ConfigInvalidError("log_likelihood_rel_tol must be positive")
        if self.variance_floor_factor <= 0:
            raise ConfigInvalidError("variance_floor_factor must be positive")
        if self.init_method not in ("kmeans++", "random"):
            raise ConfigInvalidError(f"Unknown init_method: {self.init_method}")


@dataclass(frozen=True)
class MapConfig:
    """MAP adaptation parameters"""

    relevance_factor: float = 16.0
    kl_scaling: bool = False

    def __post_init__(self):
        if not self.relevance_factor > 0:
            raise ConfigInvalidError("relevance_factor must be positive")


@dataclass(frozen=True)
class SvmConfig:
    """SMO training parameters for the one-vs-one linear SVM"""

    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10
    max_iterations: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigInvalidError("C must be positive")
        if not self.tol > 0:
            raise ConfigInvalidError("tol must be positive")
        if self.max_passes < 1 or self.max_iterations < 1:
            raise ConfigInvalidError("max_passes and max_iterations must be >= 1")


@dataclass(frozen=True)
class NbConfig:
    """Gaussian Naive Bayes parameters"""

    epsilon_factor: float = 1e-9

    def __post_init__(self):
        if not self.epsilon_factor > 0:
            raise ConfigInvalidError("epsilon_factor must be positive")


@dataclass(frozen=True)
class FusionConfig:
    """Score and supervector fusion parameters"""

    w_svm: float = 0.5
    w_nb: float = 0.5
    rule: str = "sum"
    supervector_sources: Tuple[str, str] = ("F1", "F2")

    def __post_init__(self):
        if self.w_svm < 0 or self.w_nb < 0 or abs(self.w_svm + self.w_nb - 1.0) > 1e-9:
            raise ConfigInvalidError("fusion weights must be non-negative and sum to 1")
        if self.rule not in FUSION_RULES:
            raise ConfigInvalidError(f"Unknown fusion rule: {self.rule}")
        sources = tuple(self.supervector_sources)
        if len(sources) != 2 or any(s not in ("F1", "F2", "F3", "F4") for s in sources):
            raise ConfigInvalidError("supervector_sources must name two of F1..F4")
        object.__setattr__(self, "supervector_sources", sources)


@dataclass(frozen=True)
class ExperimentConfig:
    """Corpus split and grid execution parameters"""

    n_train: int = 8
    n_test: int = 2
    split_seed: int = 0
    exclude_shared_text_from_test: bool = False
    cache_dir: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigInvalidError("n_train and n_test must be >= 1")
        if self.workers < 1:
            raise ConfigInvalidError("workers must be >= 1")


_SECTIONS = {
    "frontend": FrontendConfig,
    "em": EmConfig,
    "map": MapConfig,
    "svm": SvmConfig,
    "nb": NbConfig,
    "fusion": FusionConfig,
    "experiment": ExperimentConfig,
}


@dataclass(frozen=True)
class ToolkitConfig:
    """All configuration sections of the toolkit"""

    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    em: EmConfig = field(default_factory=EmConfig)
    map: MapConfig = field(default_factory=MapConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    nb: NbConfig = field(default_factory=NbConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ToolkitConfig":
        """
        Build a configuration from a nested dictionary

        Args:
            document: Mapping of section name to field overrides

        Returns:
            ToolkitConfig: Configuration with defaults for missing keys

        Raises:
            ConfigInvalidError: On unknown sections, unknown keys or invalid values
        """
        if not isinstance(document, dict):
            raise ConfigInvalidError("configuration document must be a JSON object")
        sections = {}
        for name, values in document.items():
            if name not in _SECTIONS:
                raise ConfigInvalidError(f"Unknown configuration section: {name}")
            if not isinstance(values, dict):
                raise ConfigInvalidError(f"Section {name} must be a JSON object")
            section_cls = _SECTIONS[name]
            known = {f.name for f in dataclasses.fields(section_cls)}
            unknown = sorted(set(values) - known)
            if unknown:
                raise ConfigInvalidError(f"Unknown keys in section {name}: {', '.join(unknown)}")
            try:
                sections[name] = section_cls(**values)
            except TypeError as e:
                raise ConfigInvalidError(f"Invalid section {name}: {e}") from e
        return cls(**sections)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ToolkitConfig":
        """Load a configuration from a JSON file."""
        try:
            with open(path, "r", encoding="utf-8") as f:
                document = json.load(f)
        except FileNotFoundError as e:
            raise ConfigInvalidError(f"Configuration file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigInvalidError(f"Configuration file is not valid JSON: {e}") from e
        return cls.from_dict(document)

    def to_dict(self) -> Dict[str, Any]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def with_seed(self, seed: int) -> "ToolkitConfig":
        """Return a copy with the EM, SVM and split seeds all set to `seed`."""
        return dataclasses.replace(
            self,
            em=dataclasses.replace(self.em, rng_seed=seed),
            svm=dataclasses.replace(self.svm, seed=seed),
            experiment=dataclasses.replace(self.experiment, split_seed=seed),
        )


def config_hash(*sections: Any) -> str:
    """
    Hash configuration sections into a stable hex digest

    Args:
        *sections: Dataclass instances or JSON-serializable values

    Returns:
        str: SHA-256 of the canonical JSON rendering
    """
    payload = [dataclasses.asdict(s) if dataclasses.is_dataclass(s) else s for s in sections]
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
