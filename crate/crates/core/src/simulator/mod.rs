//! Software phantom: scenes, vibration models and frame-cube rendering.

pub mod cube;
pub mod render;
pub mod scene;
pub mod vibration;

pub use cube::{take_inphase, FrameCube};
pub use render::{noise_stream, render_cube, render_cube_with, NoiseMode, RenderOptions};
pub use scene::{Scene, TargetKind, TargetSpec};
pub use vibration::{
    load_vibration_trace, synthesize_vibration, VibrationComponent, VibrationRole, VibrationSpec, VibrationTrace,
};
