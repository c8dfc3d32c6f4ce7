"""Major-minor LQG mean field games: consistency equations, equivalence checks, simulation."""

from .model import (ConfigError, FeedbackLaw, Model, TimeGrid, eval_feedback, load_model,
                    model_from_config, scalar_baseline, validate)

__all__ = ["ConfigError", "FeedbackLaw", "Model", "TimeGrid", "eval_feedback", "load_model",
           "model_from_config", "scalar_baseline", "validate"]
__version__ = "0.1.0"
