from typing import Optional


class SpeakerFusionError(Exception):
    """Base exception class for speaker-fusion"""

    exit_code = 1


class SpeakerFusionConfigError(SpeakerFusionError):
    """Invalid configuration or manifest"""

    exit_code = 2


class SpeakerFusionTrainingError(SpeakerFusionError):
    """Error during model training, scoring or evaluation"""

    exit_code = 3


class SpeakerFusionIOError(SpeakerFusionError):
    """Error reading or writing audio, archives or model documents"""

    exit_code = 4


# Configuration and manifest errors


class ConfigInvalidError(SpeakerFusionConfigError):
    """Exception when a configuration value violates its invariant"""


class ManifestParseError(SpeakerFusionConfigError):
    """Exception when a manifest line cannot be parsed"""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DuplicateUtteranceError(SpeakerFusionConfigError):
    """Exception when two manifest entries share an utterance id"""


class MissingAudioError(SpeakerFusionConfigError):
    """Exception when a manifest entry references a file that does not exist"""


class InsufficientUtterancesError(SpeakerFusionConfigError):
    """Exception when a speaker has too few utterances for the requested split"""

    def __init__(self, message: str, speaker_id: str):
        super().__init__(message)
        self.speaker_id = speaker_id


# Training and numerical errors


class NumericalFailureError(SpeakerFusionTrainingError):
    """Exception when a numerical routine meets a degenerate input"""


class EmTrainingError(SpeakerFusionTrainingError):
    """Exception when EM log-likelihood decreases beyond tolerance"""


class DimensionMismatchError(SpeakerFusionTrainingError):
    """Exception when vector or matrix dimensions disagree"""


class InsufficientDataError(SpeakerFusionTrainingError):
    """Exception when there are fewer frames than a model needs"""


class SingleClassInputError(SpeakerFusionTrainingError):
    """Exception when a binary classifier receives only one label"""


class NonFiniteFeatureError(SpeakerFusionTrainingError):
    """Exception when training vectors contain NaN or infinity"""


class EmptyTrainingSetError(SpeakerFusionTrainingError):
    """Exception when a model is fitted on no vectors"""


class EmptyClassError(SpeakerFusionTrainingError):
    """Exception when a class has no training vectors"""


class UtteranceMismatchError(SpeakerFusionTrainingError):
    """Exception when fused supervectors come from different utterances"""


class ComponentCountMismatchError(SpeakerFusionTrainingError):
    """Exception when fused supervectors come from UBMs of different sizes"""


class SpeakerSetMismatchError(SpeakerFusionTrainingError):
    """Exception when fused score vectors cover different speakers"""


class NotNormalizedError(SpeakerFusionTrainingError):
    """Exception when a score vector is not posterior-normalized"""


class EmptyScoresError(SpeakerFusionTrainingError):
    """Exception when a decision is requested from an empty score vector"""


class EmptyDecisionsError(SpeakerFusionTrainingError):
    """Exception when an identification rate is requested for no trials"""


class LeakageError(SpeakerFusionTrainingError):
    """Exception when test data reaches a training stage"""


# I/O errors


class AudioNotFoundError(SpeakerFusionIOError):
    """Exception when an audio file does not exist"""


class UnsupportedFormatError(SpeakerFusionIOError):
    """Exception when audio is not 16-bit PCM"""


class CorruptHeaderError(SpeakerFusionIOError):
    """Exception when a RIFF/WAVE header cannot be decoded"""


class ArchiveError(SpeakerFusionIOError):
    """Exception when a feature or supervector archive is unreadable or mismatched"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path


class ConfigHashMismatchError(ArchiveError):
    """Exception when an artifact was produced under a different configuration"""
