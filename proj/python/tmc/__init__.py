"""Tucker compression of multi-exposure stereo image stacks.

Scenes are float arrays of shape (views, exposures, height, width, 3) holding
RGB samples in [0, 1]. Tensors use numpy's Fortran order, mode 0 first.
"""

from ._tmc import (
    ArgumentError,
    BackendError,
    FormatError,
    IoError,
    NumericError,
    decode,
    encode,
    entropy_decode,
    entropy_encode,
    fit,
    ipt_to_rgb,
    load_scene,
    rank_preset,
    reconstruct,
    rgb_to_ipt,
    rgb_to_ycbcr,
    save_scene,
    scene_psnr,
    stream_header,
    synthesize_scene,
    t_hosvd,
    tucker_als,
    ycbcr_to_rgb,
)

__all__ = [name for name in dir() if not name.startswith("_")]
