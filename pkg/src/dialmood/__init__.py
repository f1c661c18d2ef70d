"""Turn-taking dynamics and speech rhythm in clinical phone interviews,
with mixed-model analysis and speaker-independent mood classification."""

__version__ = "0.1.0"

from .audio import AudioSignal, load_audio, write_wav
from .dialogue import DIALOGUE_FEATURES, DialogueFeatureVector, summarize
from .episodes import EpisodeLabel, label_episode
from .rhythm import RHYTHM_FEATURES, RhythmConfig, rhythm_features
from .segmentation import (
    ConversationTimeline,
    SegmentationConfig,
    Speaker,
    SpeechSegment,
    Turn,
    derive_turns,
    detect_speech,
    estimate_offset,
    segment_call,
)

__all__ = [
    "AudioSignal",
    "load_audio",
    "write_wav",
    "DIALOGUE_FEATURES",
    "DialogueFeatureVector",
    "summarize",
    "EpisodeLabel",
    "label_episode",
    "RHYTHM_FEATURES",
    "RhythmConfig",
    "rhythm_features",
    "ConversationTimeline",
    "SegmentationConfig",
    "Speaker",
    "SpeechSegment",
    "Turn",
    "derive_turns",
    "detect_speech",
    "estimate_offset",
    "segment_call",
]
