from .idx import IdxError, load_idx_images, load_idx_labels, write_idx
from .transforms import ANGLES, angle_of, colorize, dorsal, make_views, rotate_batch, rotate_image, ventral
from .glyphs import synth_glyph_dataset
from .datasets import (
    LABEL_FIELDS,
    N_CLASSES,
    ImageBatch,
    LabeledDataset,
    build_colored_rotated,
    glyph_splits,
    idx_splits,
    render,
    subsample_per_class,
)
from .augment import COLOR, ROTATION, SYNTHETIC_FAMILIES, TransformFamily, apply_descriptor_augmentation
