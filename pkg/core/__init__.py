"""Point-process services: autodiff, model, likelihood, simulation, prediction, training."""
