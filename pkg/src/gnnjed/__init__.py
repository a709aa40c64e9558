"""Learned and classical receivers for ISI channels with LDPC coding.

Classical baselines (BCJR, BP/NBP on Forney and Ungerboeck factor graphs,
LDPC belief propagation, turbo BCJR-BP) and graph neural network
equalizers and joint equalizer-decoders, trained with a small built-in
reverse-mode autodiff core.
"""

__version__ = "0.1.0"

from .channel import (PROAKIS_B, PROAKIS_C, TAP_PRESETS, ChannelModel, FrameBatch, TransmissionFrame,
                      Transmitter, apply_isi, bpsk_map, sigma_from_ebn0, toeplitz)
from .code import Interleaver, LdpcCode, load_alist, load_code
from .factor_graph import FactorGraph, FnKind, UngerboeckData, build_ffg, build_joint, build_tanner, build_ufg
from .gnn import GnnParams, GnnReceiver, ScheduleSpec, run_equalizer, run_jed
from .estimators import (BcjrEqualizer, BpEqualizer, DisjointReceiver, DuiddEstimator, GnnEqualizer, GnnJed,
                         NbpEqualizer, TurboReceiver)
from .evaluation import BerResult, StopRule, bmi_sweep, latency_cycles, monte_carlo, write_csv
from .training import TrainConfig, finetune, train_duidd, train_equalizer, train_jed, train_nbp

__all__ = [
    "PROAKIS_B", "PROAKIS_C", "TAP_PRESETS", "ChannelModel", "FrameBatch", "TransmissionFrame", "Transmitter",
    "apply_isi", "bpsk_map", "sigma_from_ebn0", "toeplitz",
    "Interleaver", "LdpcCode", "load_alist", "load_code",
    "FactorGraph", "FnKind", "UngerboeckData", "build_ffg", "build_joint", "build_tanner", "build_ufg",
    "GnnParams", "GnnReceiver", "ScheduleSpec", "run_equalizer", "run_jed",
    "BcjrEqualizer", "BpEqualizer", "DisjointReceiver", "DuiddEstimator", "GnnEqualizer", "GnnJed",
    "NbpEqualizer", "TurboReceiver",
    "BerResult", "StopRule", "bmi_sweep", "latency_cycles", "monte_carlo", "write_csv",
    "TrainConfig", "finetune", "train_duidd", "train_equalizer", "train_jed", "train_nbp",
]
