"""Vehicle trajectory prediction with temporal convolutional encoders.

Subpackages: ``numcore`` (tensors, autodiff, optimizer, checkpoints),
``ingest`` (track parsing, windowing, splits, archives), plus modules for
the encoders (``atcn``), the full predictor (``model``), cost accounting
(``complexity``), training/evaluation (``trainer``) and the command line
(``cli``).
"""

__version__ = "0.1.0"
