import math
import os
from datetime import datetime

import pytz


class Config:
    # Base directories
    LOG_DIR = "logs"
    OUTPUT_DIR = "output"

    # Configuration files
    CONFIG_FILE = "config.toml"
    TERMS_FILE = "terms.jsonl"
    VIDEOS_FILE = "videos.jsonl"
    EVENTS_FILE = "events.jsonl"
    CONSTRUCTION_FILE = "construction.json"

    # Pipeline artifacts
    MANIFEST_FILE = "manifest.jsonl"
    SEGMENTS_FILE = "segments"
    TEXT_FILE = "text"
    ALIGNMENTS_SUFFIX = ".align.jsonl"
    UNKNOWN_CHARS_SUFFIX = ".unknown.jsonl"
    CLASSIFICATION_FILE = "classification.jsonl"
    SPEAKERS_FILE = "speakers.jsonl"
    TRIALS_FILE = "trials.txt"
    STATS_FILE = "stats.tsv"

    # Log retention
    MAX_LOG_SIZE_MB = 10
    LOG_BACKUP_COUNT = 7

    # Timezone for event timestamps and run metadata
    UTC = pytz.timezone("UTC")

    # Audio
    SAMPLE_RATE_HZ = 16_000
    AUDIO_SUBTYPE = "PCM_16"
    AUDIO_CHANNELS = 1

    # Binary formats
    POSTERIOR_MAGIC = b"CTCP"
    POSTERIOR_VERSION = 1
    EMBEDDING_MAGIC = b"DVEC"
    POSTERIOR_SUFFIX = ".ctcp"
    EMBEDDING_SUFFIX = ".dvec"
    SIDECAR_SUFFIX = ".json"
    SUBTITLE_SUFFIXES = (".vtt", ".srt")

    # Log-probability used wherever a path is impossible
    LOG_ZERO = -1e30

    # Alignment and scoring
    WINDOW_FRAMES = 30
    BLANK_ID = 0
    EASY_THETA = -0.3
    NORMAL_THETA = -1.0
    LOWEST_THETA = -3.0
    SWEEP_THETAS = (-0.3, -0.5, -1.0, -3.0)

    # Long audio partitioning
    MAX_BLOCK_S = 500.0
    MIN_OVERLAP_MS = 600
    LAST_BLOCK_SLACK = 1.25
    SAMPLES_PER_FRAME = 640

    # Subtitles
    AUTO_SUB_THRESHOLD = 0.5
    UTT_ID_DIGITS = 5

    # Test split design
    TEST_VIDEO_FRACTION = 0.20

    # Voice activity detection
    VAD_FRAME_MS = 30
    VAD_HOP_MS = 10
    VAD_NOISE_PERCENTILE = 5
    VAD_MARGIN_DB = 6.0
    VAD_HANGOVER_FRAMES = 3
    VAD_SPEECH_FRACTION_MIN = 0.5
    VAD_SPEECH_FLOOR_DBFS = -30.0

    # Speaker variation
    MIN_UTTS = 10
    TAU_LOW = 0.0
    TAU_HIGH = 8.5
    PCA_SCALE = 180.0 / math.pi
    TSNE_PERPLEXITY = 30.0
    TSNE_ITERS = 500
    DETERMINANT_EPS = 1e-12

    # Catalog collection
    MAX_SEARCH_RESULTS = 50

    # Batch processing
    MAX_CONCURRENT_VIDEOS = 4
    DEFAULT_SEED = 0

    @classmethod
    def ensure_directories(cls, *directories):
        """Ensure the given directories (default: log dir) exist."""
        for directory in directories or (cls.LOG_DIR,):
            os.makedirs(directory, exist_ok=True)

    @classmethod
    def get_log_file_path(cls, log_dir=None, date_str=None):
        """Get log file path for specific date."""
        if date_str is None:
            date_str = datetime.now(cls.UTC).strftime("%Y%m%d")
        return os.path.join(log_dir or cls.LOG_DIR, f"corpus_{date_str}.log")
