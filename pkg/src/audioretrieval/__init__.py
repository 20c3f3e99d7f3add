"""Language-based audio retrieval: contrastive training of paired audio and
caption encoders, spectrogram and text augmentation, retrieval metrics, and
TPE-based hyperparameter search over the augmentation space."""

__version__ = "0.1.0"
