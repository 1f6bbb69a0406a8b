"""Subband splitting for determined blind source separation."""
from ._backend import BACKEND
from .bss import (
    NmfModel,
    auxiva_update,
    demix,
    identity_demixing,
    ilrma_cost,
    ilrma_update,
    iva_cost,
    oc_iva_cost,
    oc_iva_update,
    project_back,
    run_bss,
)
from .metrics import delta_sdr, dominance_map, permutation_consistency
from .sim import SimScenario, simulate
from .stft import StftConfig, istft, stft
from .subband import SubbandPlan, extract, make_subbands, subband_separate, substitute

__version__ = "0.1.0"
