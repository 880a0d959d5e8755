"""Typed run configuration built from merged settings."""

from dataclasses import dataclass, field

from core.likelihood import NLLConfig
from core.model import ModelSpec
from core.optimizer import OptimizerConfig
from core.predict import PredictConfig
from core.training import TrainConfig
from error_handling import ConfigError


@dataclass
class RunConfig:
    model: ModelSpec
    likelihood: NLLConfig
    optimizer: OptimizerConfig
    training: TrainConfig
    predict: PredictConfig
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'model': self.model.to_dict(),
            'likelihood': self.likelihood.to_dict(),
            'optimizer': self.optimizer.to_dict(),
            'training': self.training.to_dict(),
            'predict': self.predict.to_dict(),
        }


def build_run_config(settings: dict, num_types: int, progress: bool = True) -> RunConfig:
    """Validate merged settings into the typed configs every command consumes."""
    m, lk, opt, tr, pr = (settings[s] for s in ('model', 'likelihood', 'optimizer', 'training', 'predict'))
    if m['link'] is None or opt['batch_size'] is None:
        raise ConfigError("Link and batch size are unresolved; generator defaults were not applied")
    try:
        return RunConfig(
            model=ModelSpec(
                num_types=int(num_types),
                embedding_dim=int(m['embedding_dim']),
                psi_hidden=tuple(m['psi_hidden']),
                phi_hidden=tuple(m['phi_hidden']),
                smoothness=float(m['smoothness']),
                clip_bounds=tuple(m['clip_bounds']),
                link=m['link'],
                softplus_beta=float(m['softplus_beta']),
            ),
            likelihood=NLLConfig(segments=int(lk['segments']), estimator=lk['estimator'],
                                 seed=int(lk['seed']), engine=lk['engine']),
            optimizer=OptimizerConfig(
                learning_rate=float(opt['learning_rate']), beta1=float(opt['beta1']),
                beta2=float(opt['beta2']), epsilon=float(opt['epsilon']),
                weight_decay=float(opt['weight_decay']), batch_size=int(opt['batch_size'])),
            training=TrainConfig(epochs=int(tr['epochs']), patience=int(tr['patience']),
                                 seed=int(tr['seed']), shuffle=bool(tr['shuffle']), progress=progress),
            predict=PredictConfig(
                truncation_multiplier=float(pr['truncation_multiplier']),
                inner_points=int(pr['inner_points']), outer_points=int(pr['outer_points']),
                type_at=pr['type_at'],
                mean_gap=None if pr['mean_gap'] is None else float(pr['mean_gap'])),
            settings=settings,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError("Invalid configuration value", original_error=e)
