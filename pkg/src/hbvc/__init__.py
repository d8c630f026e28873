"""hbvc: a learned hierarchical B-frame video codec for YUV 4:2:0 content."""

from .yuv import (Frame420, Frame444, psnr_yuv, rgb_to_yuv420, yuv420_to_rgb,
                  to_444, space_to_depth, depth_to_space)
from .y4m import read_y4m, write_y4m, Y4MMetadata
from .gop import GOPPlan, plan_gop, validate
from .afmod import RateContext, LAMBDA_TABLE
from .codec import (BFrameCodec, CodecConfig, load_checkpoint, save_checkpoint)
from .evaluate import RDPoint, bd_rate, evaluate, target_rate, plot_rd
from .training import TrainConfig, rd_loss, toy_config, train

__version__ = "0.1.0"

__all__ = [
    "Frame420", "Frame444", "psnr_yuv", "rgb_to_yuv420", "yuv420_to_rgb",
    "to_444", "space_to_depth", "depth_to_space",
    "read_y4m", "write_y4m", "Y4MMetadata",
    "GOPPlan", "plan_gop", "validate",
    "RateContext", "LAMBDA_TABLE",
    "BFrameCodec", "CodecConfig", "load_checkpoint", "save_checkpoint",
    "RDPoint", "bd_rate", "evaluate", "target_rate", "plot_rd",
    "TrainConfig", "rd_loss", "toy_config", "train",
    "__version__",
]
