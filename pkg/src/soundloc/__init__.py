"""3D sound source localization: simulation, TDOA features, classical solvers
and a small attention-based localizer trained with a numpy autodiff engine."""

__version__ = "0.1.0"
