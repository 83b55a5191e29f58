from .dataset import MaskMatrix, MultiViewDataset, apply_zero_padding, generate_mask
from .synthetic import SyntheticSpec, generate_synthetic
from .idx import IdxError, load_idx, read_idx, write_idx
from .matfile import MatrixFormatError, load_matrix, save_matrix
from .manifest import ManifestError, load_manifest, save_manifest

__all__ = [
    "MultiViewDataset",
    "MaskMatrix",
    "generate_mask",
    "apply_zero_padding",
    "SyntheticSpec",
    "generate_synthetic",
    "IdxError",
    "read_idx",
    "write_idx",
    "load_idx",
    "MatrixFormatError",
    "save_matrix",
    "load_matrix",
    "ManifestError",
    "load_manifest",
    "save_manifest",
]
