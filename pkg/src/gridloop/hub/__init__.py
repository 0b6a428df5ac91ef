from .core import Connection, Hub, Measurement
from .protocol import Command, Frame, MalformedFrame, encode_frame, parse_frame, topic_matches

__all__ = [
    "Command",
    "Connection",
    "Frame",
    "Hub",
    "MalformedFrame",
    "Measurement",
    "encode_frame",
    "parse_frame",
    "topic_matches",
]
