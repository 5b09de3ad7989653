"""pymicg package exports."""

__all__ = [
    "Setup",
    "Logging",
    "stage",
    "reference_catalog",
    "parse_catalog",
    "ingest_records",
    "code_deprivations",
    "equal_nested_weights",
    "custom_weights",
    "pca_weights",
    "deprivation_scores",
    "fit_frontier",
]

_EXPORTS = {
    "Setup": "pymicg.setup",
    "Logging": "pymicg.custom_logging",
    "stage": "pymicg.tracing",
    "reference_catalog": "pymicg.data_model",
    "parse_catalog": "pymicg.data_model",
    "ingest_records": "pymicg.data_model",
    "code_deprivations": "pymicg.data_model",
    "equal_nested_weights": "pymicg.weighting",
    "custom_weights": "pymicg.weighting",
    "pca_weights": "pymicg.weighting",
    "deprivation_scores": "pymicg.index",
    "fit_frontier": "pymicg.frontier",
}


def __getattr__(name):
    if name in _EXPORTS:
        import importlib
        return getattr(importlib.import_module(_EXPORTS[name]), name)
    raise AttributeError(f"module 'pymicg' has no attribute {name!r}")
