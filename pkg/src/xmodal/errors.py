"""Exception hierarchy shared across the toolkit.

Everything raised on purpose derives from XmodalError so the CLI can map
failures to exit codes without enumerating modules.
"""


class XmodalError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(XmodalError):
    """Invalid configuration value or combination."""


class FormatError(XmodalError):
    """Structurally inconsistent data (shape/count mismatches)."""


class ValidationError(XmodalError):
    """Data violates a store or model invariant (NaN, bad label, ...)."""


class UnsupportedFormatError(XmodalError):
    """File carries an unknown magic or version."""


class CorruptStoreError(XmodalError):
    """File payload does not match what its header promises."""


class AmbiguousPairError(XmodalError):
    """A clip id occurs more than once within one modality."""


class OntologyError(XmodalError):
    """Malformed ontology file or unresolvable label reference."""


class DivergenceError(XmodalError):
    """Training produced a non-finite loss."""


class DegenerateFitError(XmodalError):
    """Classifier training data has fewer than two classes."""
