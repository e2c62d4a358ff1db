"""
Pipeline Settings Module
Loads one TOML file, validates every section against a schema and builds
the typed configuration objects each module consumes.
"""

import os
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .asrfilter import SplitSpec
from .chunker import ChunkConfig
from .config import Config
from .ctcseg import ScoreConfig
from .exceptions import ConfigError
from .logging_setup import logger
from .spkfilter import ClassifyConfig, TrialConfig, VadConfig


@dataclass
class PathsConfig:
    audio_dir: str = ""
    subtitle_dir: str = ""
    posterior_dir: str = ""
    embedding_dir: str = ""
    catalog_dir: str = ""
    output_dir: str = Config.OUTPUT_DIR
    token_list: str = ""
    charmap: str = ""


@dataclass
class SubtextConfig:
    language: str = "en"
    auto_threshold: float = Config.AUTO_SUB_THRESHOLD
    pairing: str = "adjacent"


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    chunk: ChunkConfig = field(default_factory=ChunkConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    trials: TrialConfig = field(default_factory=TrialConfig)
    subtext: SubtextConfig = field(default_factory=SubtextConfig)
    parallelism: int = Config.MAX_CONCURRENT_VIDEOS
    seed: int = Config.DEFAULT_SEED
    log_level: str = "INFO"
    toy_window_ms: float = 200.0
    samples_per_frame: int = Config.SAMPLES_PER_FRAME
    top_videos: int = 0

    def apply_seed(self, seed: int) -> "PipelineConfig":
        """Route one seed to every seeded component."""
        self.seed = seed
        self.split.seed = seed
        self.classify.seed = seed
        self.trials.seed = seed
        return self

    def output_path(self, *parts: str) -> str:
        return os.path.join(self.paths.output_dir, *parts)


_INPUT_DIRS = ("audio_dir", "subtitle_dir", "posterior_dir", "embedding_dir", "catalog_dir")
_INPUT_FILES = ("token_list", "charmap")


class SettingsManager:
    """Schema-driven TOML loader; every problem is collected before raising."""

    def __init__(self):
        self.settings_schema = self._get_settings_schema()

    def _get_settings_schema(self) -> Dict[str, Dict[str, Dict[str, Any]]]:
        return {
            "paths": {
                "audio_dir": {"type": str, "default": ""},
                "subtitle_dir": {"type": str, "default": ""},
                "posterior_dir": {"type": str, "default": ""},
                "embedding_dir": {"type": str, "default": ""},
                "catalog_dir": {"type": str, "default": ""},
                "output_dir": {"type": str, "default": Config.OUTPUT_DIR},
                "token_list": {"type": str, "default": ""},
                "charmap": {"type": str, "default": ""},
            },
            "run": {
                "parallelism": {"type": int, "default": Config.MAX_CONCURRENT_VIDEOS, "min": 1, "max": 256},
                "seed": {"type": int, "default": Config.DEFAULT_SEED, "min": 0},
                "log_level": {"type": str, "default": "INFO", "choices": ["DEBUG", "INFO", "WARNING", "ERROR"]},
            },
            "subtext": {
                "language": {"type": str, "default": "en"},
                "auto_threshold": {"type": float, "default": Config.AUTO_SUB_THRESHOLD, "min": 0.0, "max": 1.0},
                "pairing": {"type": str, "default": "adjacent", "choices": ["adjacent", "all"]},
            },
            "ctcseg": {
                "window_frames": {"type": int, "default": Config.WINDOW_FRAMES, "min": 1},
                "blank_id": {"type": int, "default": Config.BLANK_ID, "min": 0},
                "theta": {"type": float, "default": None},
            },
            "chunker": {
                "max_block_s": {"type": float, "default": Config.MAX_BLOCK_S, "min": 1e-6},
                "min_overlap_ms": {"type": float, "default": float(Config.MIN_OVERLAP_MS), "min": 0.0},
                "last_block_slack": {"type": float, "default": Config.LAST_BLOCK_SLACK, "min": 1.0},
                "samples_per_frame": {"type": int, "default": Config.SAMPLES_PER_FRAME, "min": 1},
                "toy_window_ms": {"type": float, "default": 200.0, "min": 0.0},
            },
            "vad": {
                "frame_ms": {"type": float, "default": float(Config.VAD_FRAME_MS), "min": 1e-3},
                "hop_ms": {"type": float, "default": float(Config.VAD_HOP_MS), "min": 1e-3},
                "noise_floor_percentile": {"type": float, "default": float(Config.VAD_NOISE_PERCENTILE),
                                           "min": 1e-3, "max": 100.0},
                "margin_db": {"type": float, "default": Config.VAD_MARGIN_DB, "min": 1e-3},
                "hangover_frames": {"type": int, "default": Config.VAD_HANGOVER_FRAMES, "min": 0},
                "speech_fraction_min": {"type": float, "default": Config.VAD_SPEECH_FRACTION_MIN,
                                        "min": 1e-9, "max": 1.0},
                "speech_floor_dbfs": {"type": float, "default": Config.VAD_SPEECH_FLOOR_DBFS, "max": 0.0},
            },
            "speaker": {
                "min_utts": {"type": int, "default": Config.MIN_UTTS, "min": 0},
                "tau_low": {"type": float, "default": Config.TAU_LOW},
                "tau_high": {"type": float, "default": Config.TAU_HIGH},
                "reducer": {"type": str, "default": "pca", "choices": ["pca", "tsne"]},
                "pca_scale": {"type": float, "default": Config.PCA_SCALE, "min": 1e-12},
                "tsne_perplexity": {"type": float, "default": Config.TSNE_PERPLEXITY, "min": 1e-3},
                "tsne_iters": {"type": int, "default": Config.TSNE_ITERS, "min": 250},
            },
            "split": {
                "easy_theta": {"type": float, "default": Config.EASY_THETA},
                "normal_theta": {"type": float, "default": Config.NORMAL_THETA},
                "train_theta": {"type": float, "default": None},
                "test_video_fraction": {"type": float, "default": Config.TEST_VIDEO_FRACTION,
                                        "min": 1e-9, "max": 1.0 - 1e-9},
                "test_videos": {"type": list, "default": None},
                "exclude": {"type": list, "default": []},
                "top_videos": {"type": int, "default": 0, "min": 0},
            },
            "trials": {
                "n_target": {"type": int, "default": 0, "min": 0},
                "n_nontarget": {"type": int, "default": 0, "min": 0},
            },
        }

    def _check_value(self, section: str, key: str, value: Any, schema: Dict, errors: List[str]) -> Any:
        name = f"{section}.{key}"
        expected = schema["type"]
        if value is None:
            return None
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if isinstance(value, bool) and expected is not bool:
            errors.append(f"{name}: expected {expected.__name__}, got bool")
            return schema["default"]
        if not isinstance(value, expected):
            errors.append(f"{name}: expected {expected.__name__}, got {type(value).__name__}")
            return schema["default"]
        if expected is list and not all(isinstance(v, str) for v in value):
            errors.append(f"{name}: expected a list of strings")
            return schema["default"]
        if "min" in schema and value < schema["min"]:
            errors.append(f"{name}: must be >= {schema['min']}")
        if "max" in schema and value > schema["max"]:
            errors.append(f"{name}: must be <= {schema['max']}")
        if "choices" in schema and value not in schema["choices"]:
            errors.append(f"{name}: must be one of {', '.join(schema['choices'])}")
        return value

    def _validate_and_apply_defaults(self, raw: Dict[str, Any], errors: List[str]) -> Dict[str, Dict[str, Any]]:
        validated: Dict[str, Dict[str, Any]] = {}
        for section in sorted(set(raw) - set(self.settings_schema)):
            errors.append(f"{section}: unknown section")
        for section, fields in self.settings_schema.items():
            values = raw.get(section, {})
            if not isinstance(values, dict):
                errors.append(f"{section}: expected a table")
                values = {}
            for key in sorted(set(values) - set(fields)):
                errors.append(f"{section}.{key}: unknown key")
            validated[section] = {
                key: self._check_value(section, key, values[key], schema, errors) if key in values
                else schema["default"]
                for key, schema in fields.items()
            }
        return validated

    def _build(self, s: Dict[str, Dict[str, Any]], base_dir: str) -> PipelineConfig:
        def resolve(path: str) -> str:
            if not path:
                return ""
            path = os.path.expanduser(path)
            return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))

        paths = PathsConfig(**{k: resolve(v) for k, v in s["paths"].items()})
        split = s["split"]
        cfg = PipelineConfig(
            paths=paths,
            score=ScoreConfig(window_frames=s["ctcseg"]["window_frames"], blank_id=s["ctcseg"]["blank_id"],
                              theta=s["ctcseg"]["theta"]),
            chunk=ChunkConfig(max_block_s=s["chunker"]["max_block_s"],
                              min_overlap_ms=s["chunker"]["min_overlap_ms"],
                              last_block_slack=s["chunker"]["last_block_slack"],
                              parallelism=s["run"]["parallelism"]),
            vad=VadConfig(**s["vad"]),
            classify=ClassifyConfig(**s["speaker"], seed=s["run"]["seed"]),
            split=SplitSpec(easy_theta=split["easy_theta"], normal_theta=split["normal_theta"],
                            test_video_fraction=split["test_video_fraction"], seed=s["run"]["seed"],
                            train_theta=split["train_theta"], test_videos=split["test_videos"],
                            exclude=tuple(split["exclude"])),
            trials=TrialConfig(n_target=s["trials"]["n_target"], n_nontarget=s["trials"]["n_nontarget"],
                               seed=s["run"]["seed"]),
            subtext=SubtextConfig(**s["subtext"]),
            parallelism=s["run"]["parallelism"],
            seed=s["run"]["seed"],
            log_level=s["run"]["log_level"],
            toy_window_ms=s["chunker"]["toy_window_ms"],
            samples_per_frame=s["chunker"]["samples_per_frame"],
            top_videos=split["top_videos"],
        )
        return cfg

    def _cross_check(self, cfg: PipelineConfig, errors: List[str]):
        if cfg.split.easy_theta < cfg.split.normal_theta:
            errors.append("split.easy_theta: must be >= split.normal_theta")
        if cfg.classify.tau_low >= cfg.classify.tau_high:
            errors.append("speaker.tau_low: must be < speaker.tau_high")
        if cfg.chunk.max_block_s * cfg.chunk.sample_rate_hz < cfg.samples_per_frame:
            errors.append("chunker.max_block_s: shorter than one frame")
        for name in _INPUT_DIRS:
            path = getattr(cfg.paths, name)
            if path and not os.path.isdir(path):
                errors.append(f"paths.{name}: directory does not exist: {path}")
        for name in _INPUT_FILES:
            path = getattr(cfg.paths, name)
            if path and not os.path.isfile(path):
                errors.append(f"paths.{name}: file does not exist: {path}")

    def load_config(self, path: Optional[str] = None) -> PipelineConfig:
        """Load and validate; raises ConfigError carrying every field message."""
        errors: List[str] = []
        raw: Dict[str, Any] = {}
        base_dir = os.getcwd()
        if path:
            try:
                with open(path, "rb") as f:
                    raw = tomllib.load(f)
            except FileNotFoundError:
                raise ConfigError([f"config file not found: {path}"])
            except tomllib.TOMLDecodeError as e:
                raise ConfigError([f"{path}: invalid TOML: {e}"])
            base_dir = os.path.dirname(os.path.abspath(path))
        else:
            logger.info("No config file given, using defaults")

        settings = self._validate_and_apply_defaults(raw, errors)
        cfg = self._build(settings, base_dir)
        self._cross_check(cfg, errors)
        if errors:
            for message in errors:
                logger.error(f"Config error: {message}")
            raise ConfigError(errors)
        logger.debug(f"Settings loaded from {path or 'defaults'}")
        return cfg

    def default_settings(self) -> Dict[str, Dict[str, Any]]:
        return {section: {k: v["default"] for k, v in fields.items()}
                for section, fields in self.settings_schema.items()}


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    escaped = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def render_toml(settings: Dict[str, Dict[str, Any]]) -> str:
    """Serialize a sections-of-scalars mapping; ``None`` values are omitted."""
    lines: List[str] = []
    for section, values in settings.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if value is not None:
                lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)
