"""WER-controllable text-to-CTC posterior simulation with a synthetic teacher."""
from .align import AlignmentStats, bin_assign, edit_align, wer, wer_between
from .core import (BLANK_ID, DEFAULT_SCHEME, DataError, MaskedPosteriorSeq, NumericalError, SeedSpec,
                   SupervisionTuple, Vocab, WerBinScheme, validate_posterior_seq)
from .cps import CpsConfig, CPSSimulator, cps_simulate
from .ctc_ops import LSDCompressor, LsdConfig, collapse, greedy_decode, lsd_compress
from .evaluation import FidelityReport, compare_report, controllability_eval, fidelity
from .simulator import CTCPosteriorSimulator, SimArch, TrainConfig, simulate
from .teacher import TeacherConfig, teach

__version__ = "0.1.0"

__all__ = ["AlignmentStats", "BLANK_ID", "CPSSimulator", "CTCPosteriorSimulator", "CpsConfig",
           "DEFAULT_SCHEME", "DataError", "FidelityReport", "LSDCompressor", "LsdConfig",
           "MaskedPosteriorSeq", "NumericalError", "SeedSpec", "SimArch", "SupervisionTuple",
           "TeacherConfig", "TrainConfig", "Vocab", "WerBinScheme", "bin_assign", "collapse",
           "compare_report", "controllability_eval", "cps_simulate", "edit_align", "fidelity",
           "greedy_decode", "lsd_compress", "simulate", "teach", "validate_posterior_seq", "wer",
           "wer_between"]
