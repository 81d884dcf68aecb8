"""phenokg: ontology-grounded clinical extraction, patient KGs, and cohort discovery."""

__version__ = "0.1.0"

from .errors import (
    BackendUnavailableError,
    ConfigError,
    CorpusIntegrityError,
    DomainError,
    GraphIntegrityError,
    OboParseError,
    OntologyValidationError,
    OutputParseError,
    OutputSchemaError,
    PhenoKGError,
    ReplayMissError,
    ScoringError,
)
from .ontology import (
    DiseaseAnnotation,
    FrequencyCategory,
    Ontology,
    OntologyTerm,
    TermId,
    frequency_bin,
    load_annotations,
    load_ontology,
    resolve_label,
)

__all__ = [
    "__version__",
    "BackendUnavailableError",
    "ConfigError",
    "CorpusIntegrityError",
    "DiseaseAnnotation",
    "DomainError",
    "FrequencyCategory",
    "GraphIntegrityError",
    "OboParseError",
    "Ontology",
    "OntologyTerm",
    "OntologyValidationError",
    "OutputParseError",
    "OutputSchemaError",
    "PhenoKGError",
    "ReplayMissError",
    "ScoringError",
    "TermId",
    "frequency_bin",
    "load_annotations",
    "load_ontology",
    "resolve_label",
]
