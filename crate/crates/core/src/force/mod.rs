//! Six-axis force estimation: dataset assembly, the convolutional
//! regressor, training and evaluation.

mod dataset;
mod eval;
mod input;
mod model;
mod train;

pub use dataset::{
    collect_dataset, gate_sample, split_by_object, split_standard, CollectOptions, DatasetManifest,
    Normalization, Sample, MIN_STD,
};
pub use eval::{constant_mean_baseline, evaluate, EvalReport};
pub use input::{
    area_resample, downsample_triple, pad_to_aspect, InputTensor, CHANNEL_GAIN, INPUT_CHANNELS,
    INPUT_HEIGHT, INPUT_WIDTH,
};
pub use model::{
    forward, layer_shapes, load_params, loss_and_gradient, save_params, ParamsHeader,
    RegressorParams, ARCHITECTURE, OUTPUTS, PARAM_COUNT, STAGES,
};
pub use train::{
    mean_normalized_mae, train, train_sets, write_loss_curve, EpochStats, LoadedSet, TrainConfig,
    TrainOutcome,
};
