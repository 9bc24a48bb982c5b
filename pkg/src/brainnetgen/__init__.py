"""Brain-connectivity graph generation and augmentation experiments."""

__version__ = "0.1.0"

AUTISM = "autism"
CONTROL = "control"
UNLABELED = "unlabeled"
LABELS = (AUTISM, CONTROL, UNLABELED)


class InputError(ValueError):
    """Invalid user input: malformed files, bad configs, violated preconditions."""


class TrainingError(RuntimeError):
    """Numerical failure during optimization (non-finite loss or gradient)."""
