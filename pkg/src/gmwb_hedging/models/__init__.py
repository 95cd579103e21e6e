from .base import ExponentialLevyModel, InverseCDFSampler, LogReturnTable, OneFactorModel
from .black_scholes import (
    BlackScholesModel,
    bs_call,
    bs_d2strike_put,
    bs_delta,
    bs_dstrike_put,
    bs_gamma,
    bs_gamma_d2vol,
    bs_gamma_dvol,
    bs_put,
)
from .variance_gamma import VarianceGammaModel, vg_gamma, vg_log_return_density, vg_put

__all__ = [
    "OneFactorModel", "ExponentialLevyModel", "LogReturnTable", "InverseCDFSampler",
    "BlackScholesModel", "VarianceGammaModel",
    "bs_put", "bs_call", "bs_delta", "bs_gamma", "bs_dstrike_put", "bs_d2strike_put",
    "bs_gamma_dvol", "bs_gamma_d2vol",
    "vg_log_return_density", "vg_put", "vg_gamma",
]
