# Make the core operations available directly from the 'src' package

from .config_loader import Settings, load_config, setup_logging
from .em_pipeline import em_index_of_form
from .hermitian import TolerancePolicy, inertia
from .morse_pipeline import delta_regularize, morse_index
from .problem_io import load_problem
from .sturm_form import SturmProblem, validate

__all__ = [
    'Settings',
    'load_config',
    'setup_logging',
    'TolerancePolicy',
    'inertia',
    'SturmProblem',
    'validate',
    'load_problem',
    'em_index_of_form',
    'morse_index',
    'delta_regularize',
]
