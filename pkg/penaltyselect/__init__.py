"""Source selection for hypothesis testing under misclassification penalties."""

__version__ = "0.1.0"
