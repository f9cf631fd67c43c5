"""Audio-visual dataset curation: a four-stage cascade that filters noisy
web-sourced candidates into a low-label-noise clip collection, plus the
spectrogram frontend, baseline classifier, evaluation metrics and human
review service that support it."""

__version__ = "0.1.0"
