//! Extended regressor, normalization, and the 84-entry Chebyshev feature
//! catalog.
//!
//! The catalog is enumerated in a fixed order that the model file relies on:
//! the constant `C0`, then `C1..C10` over each of the eight regressor
//! columns (degree-major), then the three cloud-time interactions.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data_ingest::{AlignedSample, CloudSubtype, WeatherType};
use crate::detrend::{DeviationSeries, MeanDailyProfile};
use crate::error::{Error, Result};

pub const REGRESSOR_LEN: usize = 8;
pub const MAX_DEGREE: usize = 10;
pub const CATALOG_SIZE: usize = 1 + MAX_DEGREE * REGRESSOR_LEN + 3;
/// Bumped whenever the catalog order or feature definitions change.
pub const CATALOG_VERSION: u32 = 1;

pub const REGRESSOR_NAMES: [&str; REGRESSOR_LEN] = [
    "yprime",
    "temperature",
    "dew_point",
    "humidity",
    "wind_speed",
    "hour",
    "cos_hour",
    "sin_hour",
];

/// Position of the autoregressive deviation in the regressor.
pub const AR_COLUMN: usize = 0;

/// `[y'(k), u1..u7]` for one time instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorVector(pub [f64; REGRESSOR_LEN]);

pub fn build_regressor(sample: &AlignedSample, yprime: f64) -> RegressorVector {
    let angle = PI * sample.u5 / 24.0;
    RegressorVector([
        yprime,
        sample.temperature,
        sample.dew_point,
        sample.humidity,
        sample.wind_speed,
        sample.u5,
        angle.cos(),
        angle.sin(),
    ])
}

/// Per-column divisors, each at least one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizationVector(pub [f64; REGRESSOR_LEN]);

impl NormalizationVector {
    /// `max(1, max |entry|)` per column over the given regressors.
    pub fn fit<'a>(regressors: impl IntoIterator<Item = &'a RegressorVector>) -> Self {
        let mut div = [1.0f64; REGRESSOR_LEN];
        for reg in regressors {
            for (d, v) in div.iter_mut().zip(reg.0) {
                *d = d.max(v.abs());
            }
        }
        NormalizationVector(div)
    }

    pub fn fit_samples(samples: &[AlignedSample], deviations: &DeviationSeries) -> Self {
        let regs: Vec<_> = samples
            .iter()
            .zip(&deviations.values)
            .map(|(s, &y)| build_regressor(s, y))
            .collect();
        Self::fit(&regs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|d| !(d.is_finite() && *d >= 1.0)) {
            return Err(Error::Model("normalization divisors must be finite and >= 1".into()));
        }
        Ok(())
    }
}

/// Regressor divided by the normalization vector, entries in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedRegressor(pub [f64; REGRESSOR_LEN]);

/// Element-wise division; entries that land outside `[-1, 1]` are clamped
/// and counted.
pub fn normalize(reg: &RegressorVector, norm: &NormalizationVector) -> (NormalizedRegressor, usize) {
    let mut clamps = 0;
    let mut out = [0.0; REGRESSOR_LEN];
    for ((o, &v), &d) in out.iter_mut().zip(&reg.0).zip(&norm.0) {
        let x = v / d;
        *o = if x.abs() > 1.0 {
            clamps += 1;
            x.clamp(-1.0, 1.0)
        } else {
            x
        };
    }
    (NormalizedRegressor(out), clamps)
}

/// First-kind Chebyshev polynomial `T_n(x)` by the three-term recurrence.
pub fn chebyshev(n: usize, x: f64) -> Result<f64> {
    if n > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "Chebyshev degree {n} exceeds {MAX_DEGREE}"
        )));
    }
    Ok(chebyshev_all(x)[n])
}

/// `[T_0(x), ..., T_10(x)]`.
pub fn chebyshev_all(x: f64) -> [f64; MAX_DEGREE + 1] {
    let mut t = [0.0; MAX_DEGREE + 1];
    t[0] = 1.0;
    t[1] = x;
    for n in 1..MAX_DEGREE {
        t[n + 1] = 2.0 * x * t[n] - t[n - 1];
    }
    t
}

/// Address `(w, j)` of a candidate feature: family `w` in `0..=13`, column
/// `j` in `0..8` for the polynomial families and `0` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(u8, u8)", into = "(u8, u8)")]
pub struct FeatureIndex {
    w: u8,
    j: u8,
}

impl FeatureIndex {
    pub const CONSTANT: FeatureIndex = FeatureIndex { w: 0, j: 0 };

    pub fn new(w: u8, j: u8) -> Result<Self> {
        let valid = match w {
            0 | 11..=13 => j == 0,
            1..=10 => (j as usize) < REGRESSOR_LEN,
            _ => false,
        };
        if valid {
            Ok(Self { w, j })
        } else {
            Err(Error::InvalidArgument(format!("no feature C{w},{j} in the catalog")))
        }
    }

    /// Chebyshev feature `T_degree` of regressor column `column`.
    pub fn polynomial(degree: u8, column: usize) -> Self {
        Self::new(degree, column as u8).expect("degree in 1..=10, column < 8")
    }

    /// Cloud-time interaction `C11..C13`; `which` in `0..3`.
    pub fn cloud(which: u8) -> Self {
        Self::new(11 + which, 0).expect("cloud interaction index < 3")
    }

    pub fn w(self) -> u8 {
        self.w
    }

    pub fn j(self) -> u8 {
        self.j
    }

    /// Position in catalog enumeration order.
    pub fn position(self) -> usize {
        match self.w {
            0 => 0,
            1..=10 => 1 + (self.w as usize - 1) * REGRESSOR_LEN + self.j as usize,
            _ => 1 + MAX_DEGREE * REGRESSOR_LEN + (self.w as usize - 11),
        }
    }

    pub fn from_position(pos: usize) -> Option<Self> {
        match pos {
            0 => Some(Self::CONSTANT),
            p if p <= MAX_DEGREE * REGRESSOR_LEN => {
                let q = p - 1;
                Some(Self {
                    w: (q / REGRESSOR_LEN + 1) as u8,
                    j: (q % REGRESSOR_LEN) as u8,
                })
            }
            p if p < CATALOG_SIZE => Some(Self {
                w: (11 + p - 1 - MAX_DEGREE * REGRESSOR_LEN) as u8,
                j: 0,
            }),
            _ => None,
        }
    }

    pub fn catalog() -> impl Iterator<Item = FeatureIndex> {
        (0..CATALOG_SIZE).map(|p| Self::from_position(p).expect("position in range"))
    }

    /// True for features that read the autoregressive slot.
    pub fn uses_yprime(self) -> bool {
        (1..=10).contains(&self.w) && self.j as usize == AR_COLUMN
    }

    /// Evaluates the feature on a normalized regressor. `u5` is the raw hour
    /// of day used by the cloud interactions.
    pub fn evaluate(self, phi: &NormalizedRegressor, u5: f64, subtype: CloudSubtype) -> f64 {
        match self.w {
            0 => 1.0,
            1..=10 => chebyshev_all(phi.0[self.j as usize])[self.w as usize],
            w => subtype.one_hot()[(w - 11) as usize] * u5 / 24.0,
        }
    }
}

impl TryFrom<(u8, u8)> for FeatureIndex {
    type Error = String;

    fn try_from((w, j): (u8, u8)) -> std::result::Result<Self, Self::Error> {
        FeatureIndex::new(w, j).map_err(|e| e.to_string())
    }
}

impl From<FeatureIndex> for (u8, u8) {
    fn from(f: FeatureIndex) -> Self {
        (f.w, f.j)
    }
}

impl fmt::Display for FeatureIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.w {
            0 => write!(f, "C0"),
            1..=10 => write!(f, "C{}({})", self.w, REGRESSOR_NAMES[self.j as usize]),
            11 => write!(f, "C11(cloudy*hour)"),
            12 => write!(f, "C12(mostly_cloudy*hour)"),
            _ => write!(f, "C13(partly_cloudy*hour)"),
        }
    }
}

/// All 84 feature values, in catalog order.
pub fn feature_row(phi: &NormalizedRegressor, u5: f64, subtype: CloudSubtype) -> [f64; CATALOG_SIZE] {
    let mut row = [0.0; CATALOG_SIZE];
    row[0] = 1.0;
    for (j, &x) in phi.0.iter().enumerate() {
        let t = chebyshev_all(x);
        for w in 1..=MAX_DEGREE {
            row[1 + (w - 1) * REGRESSOR_LEN + j] = t[w];
        }
    }
    let hot = subtype.one_hot();
    for c in 0..3 {
        row[1 + MAX_DEGREE * REGRESSOR_LEN + c] = hot[c] * u5 / 24.0;
    }
    row
}

/// Row bookkeeping: which sample the row came from and what it predicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMeta {
    /// Position of sample `k` in the source slice.
    pub sample_index: usize,
    pub k: i64,
    pub weather: WeatherType,
    /// Unclamped `y'(k+1)`.
    pub target: f64,
    /// `ybar(k+1)`.
    pub profile_next: f64,
}

/// Candidate feature values for every `(k, k+1)` pair, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    pub rows: Vec<RowMeta>,
    /// Samples without a same-day successor, or of another weather type.
    pub dropped: usize,
    pub clamp_count: usize,
}

impl FeatureMatrix {
    /// Assembles a matrix from precomputed catalog rows (`CATALOG_SIZE`
    /// values per row).
    pub fn from_rows(values: Vec<f64>, rows: Vec<RowMeta>) -> Result<Self> {
        if values.len() != rows.len() * CATALOG_SIZE {
            return Err(Error::InvalidArgument(format!(
                "expected {} feature values, got {}",
                rows.len() * CATALOG_SIZE,
                values.len()
            )));
        }
        Ok(Self {
            values,
            rows,
            dropped: 0,
            clamp_count: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * CATALOG_SIZE..(r + 1) * CATALOG_SIZE]
    }

    pub fn get(&self, r: usize, feature: FeatureIndex) -> f64 {
        self.values[r * CATALOG_SIZE + feature.position()]
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|m| m.target).collect()
    }

    /// Dense `rows x features.len()` block, row-major.
    pub fn columns(&self, features: &[FeatureIndex]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_rows() * features.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            out.extend(features.iter().map(|f| row[f.position()]));
        }
        out
    }

    /// Rows whose origin sample has the given weather type.
    pub fn subset(&self, weather: WeatherType) -> FeatureMatrix {
        let mut values = Vec::new();
        let mut rows = Vec::new();
        for (r, meta) in self.rows.iter().enumerate() {
            if meta.weather == weather {
                values.extend_from_slice(self.row(r));
                rows.push(*meta);
            }
        }
        FeatureMatrix {
            dropped: self.dropped + (self.rows.len() - rows.len()),
            values,
            rows,
            clamp_count: self.clamp_count,
        }
    }
}

/// Builds one row per sample `k` whose successor `k+1` is the next grid point
/// of the same day. `weather` restricts rows to one weather type at `k`.
pub fn build_feature_matrix(
    samples: &[AlignedSample],
    deviations: &DeviationSeries,
    norm: &NormalizationVector,
    profile: &MeanDailyProfile,
    weather: Option<WeatherType>,
) -> FeatureMatrix {
    let mut values = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = 0;
    let mut clamp_count = 0;
    for (i, sample) in samples.iter().enumerate() {
        let next = match samples.get(i + 1) {
            Some(next) if sample.is_followed_by(next) => next,
            _ => {
                dropped += 1;
                continue;
            }
        };
        if weather.is_some_and(|w| w != sample.weather_type) {
            dropped += 1;
            continue;
        }
        let (phi, clamps) = normalize(&build_regressor(sample, deviations.values[i]), norm);
        clamp_count += clamps;
        values.extend_from_slice(&feature_row(&phi, sample.u5, sample.cloud_subtype));
        rows.push(RowMeta {
            sample_index: i,
            k: sample.k,
            weather: sample.weather_type,
            target: deviations.raw[i + 1],
            profile_next: profile.value(next.slot()),
        });
    }
    FeatureMatrix {
        values,
        rows,
        dropped,
        clamp_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_ingest::{clock_index, parse_timestamp};
    use crate::detrend::{compute_mean_profile, compute_scale, detrend};
    use proptest::prelude::*;

    fn sample(ts: &str, subtype: CloudSubtype) -> AlignedSample {
        let ts = parse_timestamp(ts).unwrap();
        let weather = if subtype == CloudSubtype::None {
            WeatherType::Fair
        } else {
            WeatherType::Cloudy
        };
        AlignedSample {
            k: clock_index(&ts),
            timestamp: ts,
            power_kw: 2.0,
            temperature: 61.0,
            dew_point: 42.0,
            humidity: 55.0,
            wind_speed: 6.0,
            u5: crate::data_ingest::hours_of_day(&ts),
            weather_type: weather,
            cloud_subtype: subtype,
            alignment_gap_min: 0,
        }
    }

    #[test]
    fn regressor_time_terms() {
        let noon = build_regressor(&sample("2014-01-01 12:00", CloudSubtype::None), 0.1);
        assert!(noon.0[6].abs() < 1e-15);
        assert_eq!(noon.0[7], 1.0);
        let midnight = build_regressor(&sample("2014-01-01 00:00", CloudSubtype::None), 0.1);
        assert_eq!((midnight.0[6], midnight.0[7]), (1.0, 0.0));
    }

    #[test]
    fn regressor_field_order() {
        let s = sample("2014-01-01 09:30", CloudSubtype::None);
        let reg = build_regressor(&s, -0.25);
        let angle = PI * 9.5 / 24.0;
        let expected = [-0.25, 61.0, 42.0, 55.0, 6.0, 9.5, angle.cos(), angle.sin()];
        assert_eq!(reg.0, expected);
        assert!((reg.0[6].powi(2) + reg.0[7].powi(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_rules() {
        let reg = RegressorVector([0.5, 80.0, 50.0, 90.0, 10.0, 17.0, 0.3, 0.9]);
        let norm = NormalizationVector::fit([&reg]);
        assert_eq!(norm.0, [1.0, 80.0, 50.0, 90.0, 10.0, 17.0, 1.0, 1.0]);
        let (phi, clamps) = normalize(&RegressorVector(norm.0), &norm);
        assert_eq!(phi.0, [1.0; 8]);
        assert_eq!(clamps, 0);

        let mut hot = reg;
        hot.0[1] = 1.2 * 80.0;
        let (phi, clamps) = normalize(&hot, &norm);
        assert_eq!(phi.0[1], 1.0);
        assert_eq!(clamps, 1);
    }

    #[test]
    fn chebyshev_examples() {
        assert_eq!(chebyshev(2, 0.5).unwrap(), -0.5);
        assert_eq!(chebyshev(10, 1.0).unwrap(), 1.0);
        assert!((chebyshev(7, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(chebyshev(11, 0.5).is_err());
    }

    #[test]
    fn catalog_enumeration() {
        let all: Vec<_> = FeatureIndex::catalog().collect();
        assert_eq!(all.len(), 84);
        assert_eq!(all[0], FeatureIndex::CONSTANT);
        assert_eq!(all[1], FeatureIndex::polynomial(1, 0));
        assert_eq!(all[8], FeatureIndex::polynomial(1, 7));
        assert_eq!(all[9], FeatureIndex::polynomial(2, 0));
        assert_eq!(all[80], FeatureIndex::polynomial(10, 7));
        assert_eq!(
            &all[81..],
            &[FeatureIndex::cloud(0), FeatureIndex::cloud(1), FeatureIndex::cloud(2)]
        );
        for (p, f) in all.iter().enumerate() {
            assert_eq!(f.position(), p);
        }
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(FeatureIndex::from_position(84).is_none());
        assert!(FeatureIndex::new(0, 1).is_err());
        assert!(FeatureIndex::new(11, 2).is_err());
        assert!(FeatureIndex::new(3, 8).is_err());
        assert!(FeatureIndex::new(14, 0).is_err());
        assert_eq!(serde_json::to_string(&all[10]).unwrap(), "[2,1]");
        assert!(serde_json::from_str::<FeatureIndex>("[0,3]").is_err());
    }

    #[test]
    fn cloud_columns() {
        let norm = NormalizationVector([1.0, 100.0, 100.0, 100.0, 20.0, 24.0, 1.0, 1.0]);
        let fair = sample("2014-01-01 12:00", CloudSubtype::None);
        let (phi, _) = normalize(&build_regressor(&fair, 0.0), &norm);
        let row = feature_row(&phi, fair.u5, fair.cloud_subtype);
        assert_eq!(&row[81..], &[0.0, 0.0, 0.0]);

        let mostly = sample("2014-01-01 12:00", CloudSubtype::MostlyCloudy);
        let (phi, _) = normalize(&build_regressor(&mostly, 0.0), &norm);
        let row = feature_row(&phi, mostly.u5, mostly.cloud_subtype);
        assert_eq!(&row[81..], &[0.0, 0.5, 0.0]);
    }

    fn toy_day() -> Vec<AlignedSample> {
        let subtypes = [
            CloudSubtype::None,
            CloudSubtype::CloudyProper,
            CloudSubtype::PartlyCloudy,
        ];
        (0..10)
            .map(|i| {
                let mut s = sample(
                    &format!("2014-01-01 {:02}:{:02}", 9 + i / 4, (i % 4) * 15),
                    subtypes[i % 3],
                );
                s.power_kw = 1.0 + 0.3 * i as f64;
                s.temperature += i as f64;
                s.humidity -= 2.0 * i as f64;
                s
            })
            .collect()
    }

    #[test]
    fn matrix_matches_per_entry_oracle() {
        let samples = toy_day();
        let scale = compute_scale(&samples).unwrap();
        let profile = compute_mean_profile(&samples, &scale).unwrap();
        let dev = detrend(&samples, &scale, &profile);
        let norm = NormalizationVector::fit_samples(&samples, &dev);
        let fm = build_feature_matrix(&samples, &dev, &norm, &profile, None);
        assert_eq!(fm.n_rows(), 9);
        assert_eq!(fm.dropped, 1);
        for r in 0..fm.n_rows() {
            let s = &samples[r];
            let phi: Vec<f64> = build_regressor(s, dev.values[r])
                .0
                .iter()
                .zip(&norm.0)
                .map(|(v, d)| v / d)
                .collect();
            for f in FeatureIndex::catalog() {
                let expected = match f.w() {
                    0 => 1.0,
                    1..=10 => (f.w() as f64 * phi[f.j() as usize].acos()).cos(),
                    w => s.cloud_subtype.one_hot()[(w - 11) as usize] * s.u5 / 24.0,
                };
                assert!((fm.get(r, f) - expected).abs() <= 1e-14, "row {r} {f}");
            }
            assert_eq!(fm.rows[r].target, dev.raw[r + 1]);
        }
    }

    #[test]
    fn successor_must_be_same_day_grid_point() {
        let mut samples = toy_day();
        samples.remove(5);
        let scale = compute_scale(&samples).unwrap();
        let profile = compute_mean_profile(&samples, &scale).unwrap();
        let dev = detrend(&samples, &scale, &profile);
        let norm = NormalizationVector::fit_samples(&samples, &dev);
        let fm = build_feature_matrix(&samples, &dev, &norm, &profile, None);
        assert_eq!(fm.n_rows(), 7);
        assert_eq!(fm.dropped, 2);
        let cloudy = fm.subset(WeatherType::Cloudy);
        assert!(cloudy.rows.iter().all(|m| m.weather == WeatherType::Cloudy));
        assert_eq!(
            build_feature_matrix(&samples, &dev, &norm, &profile, Some(WeatherType::Cloudy)).rows,
            cloudy.rows
        );
    }

    proptest! {
        #[test]
        fn chebyshev_bounded(x in -1.0f64..=1.0, n in 0usize..=10) {
            prop_assert!(chebyshev(n, x).unwrap().abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn feature_rows_bounded(
            phi in prop::array::uniform8(-1.0f64..=1.0),
            u5 in 0.0f64..24.0,
            which in 0usize..4,
        ) {
            let subtype = [CloudSubtype::None, CloudSubtype::CloudyProper, CloudSubtype::MostlyCloudy, CloudSubtype::PartlyCloudy][which];
            let row = feature_row(&NormalizedRegressor(phi), u5, subtype);
            prop_assert_eq!(row[0], 1.0);
            prop_assert!(row.iter().all(|v| v.abs() <= 1.0 + 1e-12));
            let nonzero_cloud = row[81..].iter().filter(|v| **v != 0.0).count();
            prop_assert!(nonzero_cloud <= 1);
            if subtype == CloudSubtype::None {
                prop_assert_eq!(nonzero_cloud, 0);
            }
            for f in FeatureIndex::catalog() {
                prop_assert_eq!(f.evaluate(&NormalizedRegressor(phi), u5, subtype), row[f.position()]);
            }
        }
    }
}
