"""Fast image retargeting by a self-play-trained operator-selection agent.

Modules: ``imagecore`` (I/O, resize, observations), ``operators`` (crops,
scaling, seam carving), ``bdw`` (bi-directional warping distance and pluggable
scorers), ``multiop`` (dynamic-programming operator search), ``neural``
(numpy policy/value network) and ``agent`` (training and inference).
"""
__version__ = "0.1.0"
