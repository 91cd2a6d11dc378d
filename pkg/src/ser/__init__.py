"""Speech emotion recognition toolkit: DSP features, SVM, bi-LSTM and CNN classifiers."""

__version__ = "0.1.0"
