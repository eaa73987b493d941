"""Decode, visualize, relocate and replay V2X intersection traffic (SPaT, MAP, BSM)."""

from .geo import GeoPoint, LocalPoint
from .j2735 import BsmCore, MapData, MessageFrame, SpatData, decode_frame, encode_frame
from .pcap_io import CaptureFile, CaptureRecord, Encapsulation, load_capture, save_capture

__version__ = "0.1.0"

__all__ = [
    "BsmCore",
    "CaptureFile",
    "CaptureRecord",
    "Encapsulation",
    "GeoPoint",
    "LocalPoint",
    "MapData",
    "MessageFrame",
    "SpatData",
    "decode_frame",
    "encode_frame",
    "load_capture",
    "save_capture",
]
