"""Layer-based view synthesis distortion estimation for multiview video plus depth."""

from .errors import InputError, InternalError, VsdError
from .media_io import DEFAULT_RIG, CameraRig, StereoFrame

__version__ = "0.1.0"
__all__ = ["CameraRig", "DEFAULT_RIG", "InputError", "InternalError", "StereoFrame", "VsdError"]
