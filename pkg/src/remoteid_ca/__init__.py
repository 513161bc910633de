"""Remote ID inter-UAV communication timing/delay models, a delay-aware
collision avoidance simulator, and per-UAV DQN protocol selection."""

__version__ = "0.1.0"
