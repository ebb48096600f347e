"""Wyner-Ziv distributed video coding workbench.

Block-matching side information driven by pixel or perceptual criteria,
a feedback-channel turbo Slepian-Wolf coder for bit planes, DCT-domain
quantisation with SI-aided reconstruction, and the measurement code that
compares SI generation methods.
"""

from .metrics import MetricKind, MetricParams, Polarity, cw_ssim, mse, psnr, sad, ssim, vif
from .motion import block_match, generate_si, interpolate_si
from .pipeline import PipelineConfig, RdPoint, rd_sweep, run_table1, run_wz_codec
from .video_io import Frame, VideoSequence, load_raw_sequence, split_gop

__version__ = "0.1.0"

__all__ = [
    "Frame", "MetricKind", "MetricParams", "PipelineConfig", "Polarity", "RdPoint",
    "VideoSequence", "block_match", "cw_ssim", "generate_si", "interpolate_si",
    "load_raw_sequence", "mse", "psnr", "rd_sweep", "run_table1", "run_wz_codec", "sad",
    "split_gop", "ssim", "vif",
]
