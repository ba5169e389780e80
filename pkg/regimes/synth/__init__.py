"""
Synthetic Trials

Simulator of two-stage trials and the presets of the simulation models.
"""

from .generator import (
    GenerativeSpec,
    ProfitEstimate,
    SubjectNoise,
    draw_noise,
    generate,
    logistic,
    simulate_subjects,
    true_profit,
    working_alpha_bar,
)
from .presets import ModelPreset, model_preset, preset_ids

__all__ = [
    "GenerativeSpec",
    "ModelPreset",
    "ProfitEstimate",
    "SubjectNoise",
    "draw_noise",
    "generate",
    "logistic",
    "model_preset",
    "preset_ids",
    "simulate_subjects",
    "true_profit",
    "working_alpha_bar",
]
