"""Exception types raised across the pipeline."""


class PromptScreenError(Exception):
    """Base class for all errors raised by this package."""


# --- corpus / sampling ---

class DuplicateId(PromptScreenError):
    pass


class BadLabel(PromptScreenError):
    pass


class EmptyTranscript(PromptScreenError):
    pass


class ParseError(PromptScreenError):
    pass


class ClassMissing(PromptScreenError):
    pass


class SampleTooSmall(PromptScreenError):
    pass


class PartitionInfeasible(PromptScreenError):
    pass


class BadPartitionCount(PromptScreenError):
    pass


# --- prompt catalog ---

class UnknownFamily(PromptScreenError):
    pass


class EmptyCatalog(PromptScreenError):
    pass


class BadTemplate(PromptScreenError):
    pass


# --- inference ---

class BackendDown(PromptScreenError):
    pass


class EmptyInput(PromptScreenError):
    pass


class ProfileIncomplete(PromptScreenError):
    pass


# --- metrics ---

class GoldMissing(PromptScreenError):
    pass


class EmptyEvaluation(PromptScreenError):
    pass


class TooFewSlices(PromptScreenError):
    pass


class MisalignedPredictions(PromptScreenError):
    pass


# --- selection / orchestration ---

class EmptyOOS(PromptScreenError):
    pass


class UnknownPrompt(PromptScreenError):
    pass


class ConfigError(PromptScreenError):
    pass


class ArtifactMissing(PromptScreenError):
    pass
