"""On-disk formats and the sequence directory layout."""

from storage.formats import read_cloud, read_depth, read_ppm, write_cloud, write_depth, write_ppm
from storage.sequence import (
    LoadedSequence,
    load_calibration,
    load_queries,
    load_rectified,
    load_sequence,
    load_tracks,
    save_calibration,
    save_queries,
    save_rectified,
    save_sequence,
    save_tracks,
    write_report,
    write_table,
)

__all__ = [
    "LoadedSequence",
    "load_calibration",
    "load_queries",
    "load_rectified",
    "load_sequence",
    "load_tracks",
    "read_cloud",
    "read_depth",
    "read_ppm",
    "save_calibration",
    "save_queries",
    "save_rectified",
    "save_sequence",
    "save_tracks",
    "write_cloud",
    "write_depth",
    "write_ppm",
    "write_report",
    "write_table",
]
