from .checkpoint import load_checkpoint, save_checkpoint
from .networks import (
    DiscriminatorSpec,
    GeneratorSpec,
    discriminator_forward,
    generator_forward,
    init_discriminator,
    init_generator,
)
from .optim import AdamState, adam_step
from .training import LossLog, TrainResult, TrainSchedule, TrainingError, cgan_losses, infer, train

__all__ = [
    "AdamState",
    "DiscriminatorSpec",
    "GeneratorSpec",
    "LossLog",
    "TrainResult",
    "TrainSchedule",
    "TrainingError",
    "adam_step",
    "cgan_losses",
    "discriminator_forward",
    "generator_forward",
    "infer",
    "init_discriminator",
    "init_generator",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
