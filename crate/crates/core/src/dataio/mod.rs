//! Datasets, splits, and file formats (IDX images, CSV tables).

mod blobs;
mod csv;
mod dataset;
mod digits;
mod idx;

pub use self::csv::{
    encode_csv, fmt_f64, read_csv, write_csv, write_metrics_csv, write_points_csv, CsvTable,
    POINTS_HEADER,
};
pub use blobs::{gen_gaussian_blobs, LabelMode};
pub use dataset::{split, Dataset, Provenance, SplitFractions};
pub use digits::{
    gen_synthetic_digits, gen_synthetic_letters, render_digit, render_letter, shuffle_pixels,
    DIGIT_CLASSES, DIGIT_SIDE,
};
pub use idx::{
    image_side, load_idx, read_idx_images, read_idx_labels, write_idx_images_f64,
    write_idx_images_u8, write_idx_labels, IMAGES_F64_MAGIC, IMAGES_U8_MAGIC, LABELS_MAGIC,
};
