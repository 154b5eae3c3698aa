"""Model-free detection for a simulated acid/base molecular-communication link."""

from .channel import ChannelParams, SurrogateChannel, WaveformTrace, simulate, surrogate_channel
from .framing import FrameSpec, modulate, random_bits
from .modem import Reception, SyncError, detect_sync, receive, slice_symbols

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "SurrogateChannel", "WaveformTrace", "simulate", "surrogate_channel",
    "FrameSpec", "modulate", "random_bits", "Reception", "SyncError", "detect_sync", "receive",
    "slice_symbols", "__version__",
]
