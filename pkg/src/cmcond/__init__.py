"""Conditioning of extremum current-mode control against sensor interference.

Modules: ``types`` (configuration records), ``interference`` (waveform
classes and functionals), ``sim`` (cycle-by-cycle simulator), ``slope``,
``filtering`` and ``overdrive`` (the three conditioning methods),
``metrics`` (settling, overshoot, spectra), ``plant_models``, ``compare``
and ``cli``.
"""

__version__ = "0.1.0"
