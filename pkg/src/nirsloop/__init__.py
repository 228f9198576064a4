"""Desk-scale closed-loop stress biofeedback pipeline.

Synthetic subject -> dual-wavelength optics -> hemodynamic inversion ->
streaming DSP -> feature space -> per-subject PCA+KNN classifier ->
datagram stress packets -> debounced vibration actuator -> feedback.
"""

__version__ = "0.1.0"
