//! Dataset formats: images, annotations, splits, videos and the synthetic generator.

pub mod annotation;
pub mod netpbm;
pub mod splits;
pub mod synth;
pub mod video;

pub use annotation::{parse_annotation, AccidentAnnotation, BehaviorType, CrashBox, PhaseLengths, FPS, NUM_CATEGORIES};
pub use netpbm::{Image, PixelFormat};
pub use splits::{category_split_sizes, make_splits, SplitCatalog};
pub use synth::{synth_generate, SynthConfig};
pub use video::{clip_frame_indices, frame_file, open_dataset, sample_clip, ClipSample, VideoRecord, ANNOTATION_FILE, SEMANTIC_CLASSES};
