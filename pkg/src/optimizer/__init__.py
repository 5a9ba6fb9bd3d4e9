from .energy import (
    EnergyBreakdown,
    JacobianBlocks,
    Problem,
    data_residuals,
    huber,
    jacobians,
    robust_residual,
    total_energy,
)
from .solver import FitResult, damped_step, levenberg_marquardt, solve, solve_single_frame
