"""Audio-visual speech separation robust to audio/video offsets.

Modules: ``dsp`` (STFT, WAV), ``numcore`` (autodiff and complex layers),
``model``, ``affinity``, ``losses``, ``data`` (synthetic corpus),
``metrics``, ``training`` and ``cli``.
"""
__version__ = "0.1.0"
