"""Speech-corpus construction from subtitled audio: alignment-based ASR
cleansing and speaker-variation filtering for ASV."""

__version__ = "1.0.0"
