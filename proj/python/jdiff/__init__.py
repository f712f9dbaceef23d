"""Python interface to the joint multimodal diffusion engine.

The heavy lifting lives in the compiled extension `_jdiff`; this package
re-exports its surface and adds a small convenience for running the full
pack/train/sample/evaluate pipeline from a config file.
"""

from ._jdiff import (
    InputError,
    NoiseSchedule,
    Rng,
    RunConfig,
    evaluate,
    forward_step,
    inspect,
    linear_schedule,
    pack,
    q_sample,
    sample,
    train,
)

__all__ = [
    "InputError",
    "NoiseSchedule",
    "Rng",
    "RunConfig",
    "evaluate",
    "forward_step",
    "inspect",
    "linear_schedule",
    "pack",
    "q_sample",
    "run_pipeline",
    "sample",
    "train",
]


def run_pipeline(config_path, overrides=()):
    """Run pack, train, sample, and evaluate for one config file.

    Returns the metrics dict from `evaluate`.
    """
    config = RunConfig.from_file(config_path, list(overrides))
    pack(config)
    train(config)
    sample(config)
    return evaluate(config)
