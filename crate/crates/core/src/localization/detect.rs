//! Peak-based support detection on a range-angle map.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::map::RangeAngleMap;
use crate::error::{Error, Result};
use crate::io::{write_atomic, CsvTable};

/// Region of interest in distance (m) and angle (degrees), both closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Roi {
    pub distance: [f64; 2],
    pub angle: [f64; 2],
}

impl Default for Roi {
    fn default() -> Self {
        Self {
            distance: [0.5, 2.0],
            angle: [-50.0, 50.0],
        }
    }
}

impl Roi {
    pub fn contains(&self, distance: f64, angle: f64) -> bool {
        let eps = 1e-9;
        distance >= self.distance[0] - eps
            && distance <= self.distance[1] + eps
            && angle >= self.angle[0] - eps
            && angle <= self.angle[1] + eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSettings {
    pub roi: Roi,
    /// Minimum peak value relative to the ROI maximum.
    pub range_thr: f64,
    /// Minimum peak value relative to the maximum of its own angle profile.
    pub angle_thr: f64,
    /// Values below this fraction of the ROI maximum are zeroed first.
    pub denoise_frac: f64,
    /// Full width, in range bins, of the box centred on a stronger peak
    /// inside which weaker peaks are dropped.
    pub nms_range_bins: usize,
    /// Full width of the same box in degrees.
    pub nms_angle_deg: f64,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        Self {
            roi: Roi::default(),
            range_thr: 0.1,
            angle_thr: 0.4,
            denoise_frac: 0.0005,
            nms_range_bins: 2,
            nms_angle_deg: 5.0,
        }
    }
}

impl DetectionSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("range_thr", self.range_thr), ("angle_thr", self.angle_thr)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.denoise_frac) {
            return Err(Error::config(format!(
                "denoise_frac must lie in [0, 1), got {}",
                self.denoise_frac
            )));
        }
        let [d0, d1] = self.roi.distance;
        let [a0, a1] = self.roi.angle;
        if !(d0 <= d1 && a0 <= a1) || [d0, d1, a0, a1].iter().any(|v| !v.is_finite()) {
            return Err(Error::config(format!("ROI {:?} is not a valid box", self.roi)));
        }
        if !(self.nms_angle_deg >= 0.0) {
            return Err(Error::config("nms_angle_deg must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportEntry {
    pub range_bin: usize,
    pub angle_bin: usize,
    pub distance: f64,
    pub angle: f64,
    /// Peak value normalized by the ROI maximum.
    pub power: f64,
}

/// Detected cells, strongest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Support {
    pub entries: Vec<SupportEntry>,
}

impl Support {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id,range_bin,angle_bin,distance_m,angle_deg,power\n");
        for (z, e) in self.entries.iter().enumerate() {
            writeln!(
                out,
                "{z},{},{},{},{},{:e}",
                e.range_bin, e.angle_bin, e.distance, e.angle, e.power
            )
            .unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let table = CsvTable::read(path)?;
        let cols = ["range_bin", "angle_bin", "distance_m", "angle_deg", "power"].map(|c| table.column(c));
        let [rb, ab, d, a, p] = cols;
        let (rb, ab, d, a, p) = (rb?, ab?, d?, a?, p?);
        let entries = (0..table.rows.len())
            .map(|r| {
                Ok(SupportEntry {
                    range_bin: table.usize_at(r, rb)?,
                    angle_bin: table.usize_at(r, ab)?,
                    distance: table.f64_at(r, d)?,
                    angle: table.f64_at(r, a)?,
                    power: table.f64_at(r, p)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }
}

/// Finds local maxima of the ROI-normalized map that pass both thresholds.
pub fn detect_support(map: &RangeAngleMap, settings: &DetectionSettings) -> Result<Support> {
    settings.validate()?;
    let rows: Vec<usize> = (0..map.distances.len())
        .filter(|&m| map.distances[m] >= settings.roi.distance[0] - 1e-9 && map.distances[m] <= settings.roi.distance[1] + 1e-9)
        .collect();
    let cols: Vec<usize> = (0..map.angles.len())
        .filter(|&p| map.angles[p] >= settings.roi.angle[0] - 1e-9 && map.angles[p] <= settings.roi.angle[1] + 1e-9)
        .collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::config(format!("ROI {:?} contains no grid cells", settings.roi)));
    }
    let (m0, p0) = (rows[0], cols[0]);
    let (nm, np) = (rows.len(), cols.len());

    let mut v = ndarray::Array2::from_shape_fn((nm, np), |(i, j)| map.values[[m0 + i, p0 + j]]);
    let max = v.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 || !max.is_finite() {
        return Ok(Support::default());
    }
    v.mapv_inplace(|x| {
        let n = x / max;
        if n < settings.denoise_frac {
            0.0
        } else {
            n
        }
    });
    let row_max: Vec<f64> = v.outer_iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();

    let mut peaks = Vec::new();
    for i in 0..nm {
        for j in 0..np {
            let x = v[[i, j]];
            if x <= 0.0 || x < settings.range_thr || x < settings.angle_thr * row_max[i] {
                continue;
            }
            let mut is_max = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || ii < 0 || jj < 0 || ii >= nm as i64 || jj >= np as i64 {
                        continue;
                    }
                    if v[[ii as usize, jj as usize]] > x {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((i, j, x));
            }
        }
    }
    // strongest first; ties broken by position for determinism
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut entries: Vec<SupportEntry> = Vec::new();
    for (i, j, x) in peaks {
        let (m, p) = (m0 + i, p0 + j);
        let suppressed = entries.iter().any(|e| {
            2 * e.range_bin.abs_diff(m) <= settings.nms_range_bins
                && 2.0 * (e.angle - map.angles[p]).abs() <= settings.nms_angle_deg + 1e-9
        });
        if !suppressed {
            entries.push(SupportEntry {
                range_bin: m,
                angle_bin: p,
                distance: map.distances[m],
                angle: map.angles[p],
                power: x,
            });
        }
    }
    Ok(Support { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn grid_map(values: Array2<f64>) -> RangeAngleMap {
        let (m, p) = values.dim();
        RangeAngleMap {
            distances: (0..m).map(|i| 0.05 * i as f64).collect(),
            angles: (0..p).map(|j| -90.0 + j as f64).collect(),
            values,
        }
    }

    fn everywhere() -> DetectionSettings {
        DetectionSettings {
            roi: Roi {
                distance: [0.0, 10.0],
                angle: [-90.0, 90.0],
            },
            ..Default::default()
        }
    }

    #[test]
    fn single_cell_is_detected_and_decoded() {
        let mut v = Array2::zeros((40, 180));
        v[[20, 100]] = 3.0;
        let s = detect_support(&grid_map(v), &everywhere()).unwrap();
        assert_eq!(s.len(), 1);
        let e = &s.entries[0];
        assert_eq!((e.range_bin, e.angle_bin), (20, 100));
        assert!((e.distance - 1.0).abs() < 1e-12);
        assert_eq!(e.angle, 10.0);
        assert_eq!(e.power, 1.0);
    }

    #[test]
    fn thresholds_filter_weak_peaks() {
        let mut v = Array2::zeros((40, 180));
        v[[10, 50]] = 1.0;
        v[[30, 50]] = 0.05; // below range_thr
        v[[10, 120]] = 0.3; // same row, below angle_thr of that row
        v[[20, 140]] = 0.2; // alone in its row: passes both
        let s = detect_support(&grid_map(v), &everywhere()).unwrap();
        let cells: Vec<(usize, usize)> = s.entries.iter().map(|e| (e.range_bin, e.angle_bin)).collect();
        assert_eq!(cells, vec![(10, 50), (20, 140)]);
    }

    #[test]
    fn nearby_peaks_are_suppressed() {
        let mut v = Array2::zeros((40, 180));
        v[[10, 50]] = 1.0;
        v[[11, 52]] = 0.9; // inside the 2-bin x 5-degree box
        v[[9, 48]] = 0.85; // inside, other corner
        v[[11, 54]] = 0.8; // 4 degrees away: kept
        v[[12, 50]] = 0.7; // 2 bins away: kept
        let s = detect_support(&grid_map(v), &everywhere()).unwrap();
        let cells: Vec<(usize, usize)> = s.entries.iter().map(|e| (e.range_bin, e.angle_bin)).collect();
        assert_eq!(cells, vec![(10, 50), (11, 54), (12, 50)]);
        assert!(s.entries.windows(2).all(|w| w[0].power >= w[1].power));
    }

    #[test]
    fn roi_restricts_and_normalizes() {
        let mut v = Array2::zeros((40, 180));
        v[[2, 90]] = 100.0; // outside the default ROI (0.1 m)
        v[[15, 90]] = 2.0;
        let s = detect_support(&grid_map(v), &DetectionSettings::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.entries[0].range_bin, 15);
        assert_eq!(s.entries[0].power, 1.0);
    }

    #[test]
    fn empty_roi_is_an_error_and_flat_map_is_empty() {
        let v = Array2::zeros((40, 180));
        let mut settings = everywhere();
        settings.roi.distance = [5.0, 6.0];
        assert!(matches!(detect_support(&grid_map(v.clone()), &settings), Err(Error::Config(_))));
        assert!(detect_support(&grid_map(v), &everywhere()).unwrap().is_empty());
    }

    #[test]
    fn support_round_trips_through_csv() {
        let mut v = Array2::zeros((40, 180));
        v[[12, 70]] = 1.0;
        v[[25, 130]] = 0.5;
        let s = detect_support(&grid_map(v), &everywhere()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("support.csv");
        s.write(&path).unwrap();
        assert_eq!(Support::read(&path).unwrap(), s);
    }
}
