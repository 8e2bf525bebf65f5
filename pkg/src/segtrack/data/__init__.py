from .files import (
    FORMAT_VERSION,
    DetectionFile,
    DetectionVideo,
    SequenceFile,
    detections_text,
    load_annotations,
    load_detections,
    load_results,
    parse_detections,
    save_annotations,
    save_detections,
    save_results,
)
from .masks import polygon_to_mask, rle_decode, rle_encode
from .overlay import id_color, read_ppm, render_overlay
from .synthetic import SynthConfig, generate_synthetic, occlusion_corpus

__all__ = [
    "FORMAT_VERSION",
    "DetectionFile",
    "DetectionVideo",
    "SequenceFile",
    "SynthConfig",
    "detections_text",
    "generate_synthetic",
    "id_color",
    "load_annotations",
    "load_detections",
    "load_results",
    "occlusion_corpus",
    "parse_detections",
    "polygon_to_mask",
    "read_ppm",
    "render_overlay",
    "rle_decode",
    "rle_encode",
    "save_annotations",
    "save_detections",
    "save_results",
]
