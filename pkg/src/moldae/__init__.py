"""moldae: molecular string codec, denoising sequence model, and eval harnesses.

Submodules are imported lazily so the CLI can pin BLAS thread counts before
numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "autodiff", "canon", "checkpoint", "cli", "corpus", "elements", "fingerprint",
    "genmetrics", "graph", "model", "propeval", "selfies", "smiles", "tokenizer",
    "training",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module 'moldae' has no attribute {name!r}")
