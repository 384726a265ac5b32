# Package initialization file for rstools
# Random-sampling LLN/CLT toolkit for functionals of increments

# Import key modules
from . import errors
from . import logs
from . import sampling
from . import pathsim
from . import functionals
from . import gaussianlimits
from . import harness
from . import ticks
from . import csvio
from . import profiles

# Define what's available when importing * from this package
__all__ = [
    'errors',
    'logs',
    'sampling',
    'pathsim',
    'functionals',
    'gaussianlimits',
    'harness',
    'ticks',
    'csvio',
    'profiles'
]
