use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("reduction over an empty tensor")]
    EmptyTensor,

    #[error("unknown layer '{name}' (available: {available})")]
    UnknownLayer { name: String, available: String },

    #[error("duplicate layer name '{0}'")]
    DuplicateLayer(String),

    #[error("layer '{layer}' expects input {expected:?} but receives {actual:?}")]
    LayerShape {
        layer: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid layer '{layer}': {reason}")]
    InvalidLayer { layer: String, reason: String },

    #[error("class index {class} out of range for {classes} outputs")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("step count must be at least 1")]
    ZeroSteps,

    #[error("interpolation index {index} out of range 0..={steps}")]
    StepOutOfRange { index: usize, steps: usize },

    #[error("input has {dims} dimensions, above the cap of {cap}")]
    SizeCap { dims: usize, cap: usize },

    #[error("neuron index {index} out of range for layer of {size} neurons")]
    NeuronOutOfRange { index: usize, size: usize },

    #[error("fraction {fraction} selects no neurons from a layer of {size}")]
    EmptySelection { fraction: f64, size: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("truncated input: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("malformed model header: {0}")]
    Header(String),

    #[error("{count} trailing bytes after model payload")]
    TrailingBytes { count: usize },

    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} at index {index} is out of range")]
    BadLabel { index: usize, label: usize },

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
