"""Software twin of a wearable 24-channel dual-wavelength fNIRS system."""

from .messages import (Ack, Command, Frame, FrameBatch, MuxOverride,
                       SetEmitter, SetIirCutoff, StatusRequest, StreamControl)

__version__ = "0.1.0"

__all__ = [
    "Ack", "Command", "Frame", "FrameBatch", "MuxOverride", "SetEmitter",
    "SetIirCutoff", "StatusRequest", "StreamControl", "__version__",
]
