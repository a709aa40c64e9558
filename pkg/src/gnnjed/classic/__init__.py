"""Classical equalization and decoding baselines."""

from .bcjr import Trellis, bcjr_equalize
from .bp import bp_equalize, bp_messages, nbp_equalize
from .common import LLR_MAX, hard_decision, max_star
from .ldpc import DecoderOutput, ldpc_bp_decode, ldpc_messages
from .turbo import DuiddReceiver, TurboOutput, code_to_symbol_llr, symbols_to_code_llr, turbo_bcjr_bp

__all__ = [
    "LLR_MAX",
    "DecoderOutput",
    "DuiddReceiver",
    "Trellis",
    "TurboOutput",
    "bcjr_equalize",
    "bp_equalize",
    "bp_messages",
    "code_to_symbol_llr",
    "hard_decision",
    "ldpc_bp_decode",
    "ldpc_messages",
    "max_star",
    "nbp_equalize",
    "symbols_to_code_llr",
    "turbo_bcjr_bp",
]
