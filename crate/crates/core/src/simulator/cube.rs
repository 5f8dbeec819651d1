//! The frame cube `{Y_l}` and its on-disk format.
//!
//! A cube is stored as two files sharing a stem: `<stem>.hdr`, a `key=value`
//! text header, and `<stem>.bin`, little-endian `f32` pairs `(re, im)` laid
//! out frame-major, then receiver, then fast-time sample (fastest).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{s, Array3, ArrayView2, ArrayView3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

const HEADER_MAGIC: &str = "# fmcw-vitals frame cube";
const DTYPE: &str = "cf32le";

#[derive(Debug, Clone, PartialEq)]
pub struct FrameCube {
    /// Samples indexed `(frame, receiver, fast-time sample)`.
    data: Array3<Complex64>,
    frame_rate: f64,
    real_only: bool,
    seed: Option<u64>,
}

impl FrameCube {
    pub fn new(data: Array3<Complex64>, frame_rate: f64) -> Self {
        Self {
            data,
            frame_rate,
            real_only: false,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn zeros(frames: usize, receivers: usize, samples: usize, frame_rate: f64) -> Self {
        Self::new(Array3::zeros((frames, receivers, samples)), frame_rate)
    }

    pub fn data(&self) -> ArrayView3<'_, Complex64> {
        self.data.view()
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn receivers(&self) -> usize {
        self.data.dim().1
    }

    pub fn samples(&self) -> usize {
        self.data.dim().2
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn duration(&self) -> f64 {
        self.frames() as f64 / self.frame_rate
    }

    pub fn real_only(&self) -> bool {
        self.real_only
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Frame `l` as a `K x N` view (the transpose of `Y_l`).
    pub fn frame(&self, l: usize) -> ArrayView2<'_, Complex64> {
        self.data.slice(s![l, .., ..])
    }

    /// Copy of frames `start..end`.
    pub fn slice_frames(&self, start: usize, end: usize) -> FrameCube {
        FrameCube {
            data: self.data.slice(s![start..end, .., ..]).to_owned(),
            frame_rate: self.frame_rate,
            real_only: self.real_only,
            seed: self.seed,
        }
    }

    pub(crate) fn with_data(&self, data: Array3<Complex64>) -> FrameCube {
        FrameCube {
            data,
            frame_rate: self.frame_rate,
            real_only: self.real_only,
            seed: self.seed,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Header path for a payload path.
    pub fn header_path(payload: &Path) -> PathBuf {
        payload.with_extension("hdr")
    }

    /// Writes `<path>` (payload) and its `.hdr` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut header = String::new();
        writeln!(header, "{HEADER_MAGIC}").unwrap();
        writeln!(header, "N_bar={}", self.samples()).unwrap();
        writeln!(header, "K={}", self.receivers()).unwrap();
        writeln!(header, "L={}", self.frames()).unwrap();
        writeln!(header, "dtype={DTYPE}").unwrap();
        writeln!(header, "real_only={}", self.real_only).unwrap();
        writeln!(header, "f_s={}", self.frame_rate).unwrap();
        match self.seed {
            Some(seed) => writeln!(header, "seed={seed}").unwrap(),
            None => writeln!(header, "seed=none").unwrap(),
        }
        let mut payload = Vec::with_capacity(self.data.len() * 8);
        for z in self.data.iter() {
            payload.extend_from_slice(&(z.re as f32).to_le_bytes());
            payload.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        write_atomic(&Self::header_path(path), header.as_bytes())?;
        write_atomic(path, &payload)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header_path = Self::header_path(path);
        let header = read_text(&header_path)?;
        let bad = |msg: String| Error::data(format!("{}: {msg}", header_path.display()));
        let mut fields = std::collections::BTreeMap::new();
        for line in header.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed line '{line}'")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| bad(format!("missing field {key}")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?.parse().map_err(|_| bad(format!("field {key} is not a count")))
        };
        let samples = parse_usize("N_bar")?;
        let receivers = parse_usize("K")?;
        let frames = parse_usize("L")?;
        if get("dtype")? != DTYPE {
            return Err(bad(format!("unsupported dtype, expected {DTYPE}")));
        }
        let real_only = match get("real_only")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(bad(format!("real_only must be true/false, got {other}"))),
        };
        let frame_rate: f64 = get("f_s")?
            .parse()
            .map_err(|_| bad("f_s is not a number".into()))?;
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(bad("f_s must be positive".into()));
        }
        let seed = match get("seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| bad("seed is not an integer".into()))?),
        };

        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let count = frames * receivers * samples;
        if bytes.len() != count * 8 {
            return Err(Error::data(format!(
                "{}: payload has {} bytes, header implies {}",
                path.display(),
                bytes.len(),
                count * 8
            )));
        }
        let values: Vec<Complex64> = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        let data = Array3::from_shape_vec((frames, receivers, samples), values)
            .expect("length checked above");
        let cube = FrameCube {
            data,
            frame_rate,
            real_only,
            seed,
        };
        if !cube.is_finite() {
            return Err(Error::data(format!("{}: non-finite samples", path.display())));
        }
        Ok(cube)
    }
}

/// Keeps only the in-phase channel: imaginary parts are zeroed.
///
/// Downstream processing of a real cube must use `M = N_bar / 2` range bins.
pub fn take_inphase(cube: &FrameCube) -> FrameCube {
    let mut out = cube.clone();
    out.data.mapv_inplace(|z| Complex64::new(z.re, 0.0));
    out.real_only = true;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    fn ramp_cube() -> FrameCube {
        let data = Array3::from_shape_fn((3, 2, 4), |(l, k, n)| {
            Complex64::new((l * 8 + k * 4 + n) as f64, -(n as f64) * 0.5)
        });
        FrameCube::new(data, 20.0).with_seed(9)
    }

    #[test]
    fn payload_is_frame_major_interleaved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let cube = ramp_cube();
        cube.write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 3 * 2 * 4 * 8);
        // element (l=1, k=0, n=2) sits at flat index 1*8 + 0*4 + 2 = 10
        let re = f32::from_le_bytes(bytes[80..84].try_into().unwrap());
        let im = f32::from_le_bytes(bytes[84..88].try_into().unwrap());
        assert_eq!((re, im), (10.0, -1.0));
        let header = std::fs::read_to_string(FrameCube::header_path(&path)).unwrap();
        for key in ["N_bar=4", "K=2", "L=3", "dtype=cf32le", "real_only=false", "f_s=20", "seed=9"] {
            assert!(header.contains(key), "{key}");
        }
        assert_eq!(FrameCube::read(&path).unwrap(), cube);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        ramp_cube().write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(FrameCube::read(&path), Err(Error::Data(_))));
    }

    #[test]
    fn inphase_of_real_cube_is_identity() {
        let data = Array3::from_shape_fn((2, 2, 3), |(l, k, n)| Complex64::new((l + k + n) as f64, 0.0));
        let cube = FrameCube::new(data.clone(), 20.0);
        let out = take_inphase(&cube);
        assert!(out.real_only());
        assert_eq!(out.data(), data.view());
    }

    #[test]
    fn inphase_of_imaginary_cube_is_zero() {
        let data = Array3::from_elem((2, 2, 3), Complex64::new(0.0, 1.7));
        let out = take_inphase(&FrameCube::new(data, 20.0));
        assert!(out.data().iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn inphase_tone_has_conjugate_symmetric_spectrum() {
        let n = 64;
        let data = Array3::from_shape_fn((1, 1, n), |(_, _, i)| {
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 5.3 * i as f64 / n as f64 + 0.4)
        });
        let real = take_inphase(&FrameCube::new(data, 20.0));
        let mut spec: Vec<Complex64> = real.frame(0).row(0).to_vec();
        FftPlanner::new().plan_fft_forward(n).process(&mut spec);
        for k in 1..n {
            assert!((spec[k] - spec[n - k].conj()).norm() < 1e-9);
        }
    }
}
