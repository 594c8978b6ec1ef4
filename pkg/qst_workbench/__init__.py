__all__ = [
    "bench",
    "config",
    "dnn",
    "lre",
    "measure",
    "mle",
    "qstate",
    "sampling",
]
