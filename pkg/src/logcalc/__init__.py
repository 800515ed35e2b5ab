"""logcalc: exact logarithmic formal calculus with a verification harness."""

from logcalc.scalars import Scalar, phase_of_rational_power, branch_value

__all__ = ["Scalar", "phase_of_rational_power", "branch_value"]
__version__ = "0.1.0"
