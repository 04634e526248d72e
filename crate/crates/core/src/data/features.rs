use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::autoencoder::StationEncoder;
use super::encode::{encode_cyclic, one_hot, CategoricalEncoding, MinMaxScaler, Vocabulary};
use super::FeatureFrame;
use crate::error::{Error, Result};
use crate::tcn::EmbeddingSpec;

/// Dates treated as holidays at a site.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    pub dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self {
            dates: dates.into_iter().collect(),
        }
    }

    /// Reads a `date,name` CSV with ISO dates.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let mut dates = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let raw = rec.get(0).unwrap_or("");
            let d = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .map_err(|_| Error::data(format!("{}: bad holiday date `{raw}`", path.display())))?;
            dates.insert(d);
        }
        Ok(Self { dates })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "name"])?;
        for d in &self.dates {
            w.write_record([d.format("%Y-%m-%d").to_string(), "holiday".to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.dates.contains(&d)
    }
}

pub fn day_type(date: NaiveDate, holidays: &HolidayCalendar) -> &'static str {
    if holidays.contains(date) {
        "holiday"
    } else if matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
        "weekend"
    } else {
        "weekday"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub holidays: HolidayCalendar,
    /// Adds a min-max scaled count of active stations.
    pub active_stations: bool,
    /// Adds compressed station-activity columns.
    pub station_encoder: Option<StationEncoder>,
    /// Feeds the weekday through an embedding table as well as cyclically.
    pub weekday_embedding: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            holidays: HolidayCalendar::default(),
            active_stations: true,
            station_encoder: None,
            weekday_embedding: true,
        }
    }
}

/// Everything fitted on a training range that is needed to encode any range
/// of a site the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    pub feature_names: Vec<String>,
    pub options: FeatureOptions,
    pub day_type_vocab: Vocabulary,
    pub weekday_vocab: Vocabulary,
    pub weekday_encoding: CategoricalEncoding,
    /// Scaler for the dense columns that are scaled (count and station
    /// codes), in feature order after the calendar columns.
    pub numeric_scaler: Option<MinMaxScaler>,
    pub target_scaler: MinMaxScaler,
    pub fit_range: Range<usize>,
}

const CALENDAR: [&str; 7] = ["hour_sin", "hour_cos", "dow_sin", "dow_cos", "month_sin", "month_cos", "holiday"];

impl FeaturePlan {
    pub fn fit(frame: &FeatureFrame, fit_range: Range<usize>, options: FeatureOptions) -> Result<Self> {
        if fit_range.is_empty() || fit_range.end > frame.len() {
            return Err(Error::invalid(format!(
                "fit range {fit_range:?} must be a non-empty part of 0..{}",
                frame.len()
            )));
        }
        let dates = || fit_range.clone().map(|t| frame.timestamp(t).date_naive());
        let mut day_types: Vec<&str> = dates().map(|d| day_type(d, &options.holidays)).collect();
        // Keep the one-hot layout stable even if a short range misses a kind.
        day_types.extend(["weekday", "weekend"]);
        let day_type_vocab = Vocabulary::fit(day_types)?;
        let weekday_vocab = Vocabulary::fit((0..7).map(|d| d.to_string()))?;
        let weekday_encoding = CategoricalEncoding::plan(&weekday_vocab)?;
        let mut plan = Self {
            feature_names: Vec::new(),
            options,
            day_type_vocab,
            weekday_vocab,
            weekday_encoding,
            numeric_scaler: None,
            target_scaler: MinMaxScaler::fit_column(&[0.0])?,
            fit_range: fit_range.clone(),
        };
        plan.feature_names = plan.build_names();
        plan.fit_scalers(frame, fit_range)?;
        Ok(plan)
    }

    fn build_names(&self) -> Vec<String> {
        let mut names: Vec<String> = CALENDAR.iter().map(|s| s.to_string()).collect();
        names.extend(self.day_type_vocab.values.iter().map(|v| format!("day_type={v}")));
        if self.options.active_stations {
            names.push("active_stations".into());
        }
        if let Some(enc) = &self.options.station_encoder {
            names.extend((0..enc.dims()).map(|j| format!("station_z{j}")));
        }
        names
    }

    fn unscaled_columns(&self) -> usize {
        CALENDAR.len() + self.day_type_vocab.len()
    }

    fn numeric_raw(&self, frame: &FeatureFrame, t: usize) -> Vec<f64> {
        let mut row = Vec::new();
        if self.options.active_stations {
            row.push(frame.activity[t].len() as f64);
        }
        if let Some(enc) = &self.options.station_encoder {
            row.extend(enc.encode_hour(frame, t));
        }
        row
    }

    fn fit_scalers(&mut self, frame: &FeatureFrame, range: Range<usize>) -> Result<()> {
        if range.is_empty() || range.end > frame.len() {
            return Err(Error::invalid(format!("fit range {range:?} outside 0..{}", frame.len())));
        }
        let numeric: Vec<f64> = range.clone().flat_map(|t| self.numeric_raw(frame, t)).collect();
        let width = self.feature_names.len() - self.unscaled_columns();
        self.numeric_scaler = if width > 0 {
            Some(MinMaxScaler::fit(&numeric, width)?)
        } else {
            None
        };
        self.target_scaler = MinMaxScaler::fit_column(&frame.target[range.clone()])?;
        self.fit_range = range;
        Ok(())
    }

    /// Same vocabularies and encoder, scalers refitted on `range` of
    /// `frame` (another site or a later period).
    pub fn refit(&self, frame: &FeatureFrame, range: Range<usize>) -> Result<Self> {
        let mut plan = self.clone();
        plan.fit_scalers(frame, range)?;
        Ok(plan)
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Dense channel names the network sees: features then the past target.
    pub fn input_names(&self) -> Vec<String> {
        let mut names = self.feature_names.clone();
        names.push("target".into());
        names
    }

    pub fn embeddings(&self) -> Vec<EmbeddingSpec> {
        match (self.options.weekday_embedding, self.weekday_encoding) {
            (true, CategoricalEncoding::Embedding { rows, dim }) => vec![EmbeddingSpec {
                name: "day_of_week".into(),
                rows,
                dim,
            }],
            _ => Vec::new(),
        }
    }

    /// Encodes every hour of `frame`.
    pub fn apply(&self, frame: &FeatureFrame) -> Result<FeatureFrame> {
        let mut out = frame.clone();
        let d = self.num_features();
        let embeddings = self.embeddings();
        out.features = Vec::with_capacity(frame.len() * d);
        out.categorical = Vec::with_capacity(frame.len() * embeddings.len());
        for t in 0..frame.len() {
            let ts = frame.timestamp(t);
            let date = ts.date_naive();
            for (s, c) in encode_cyclic(ts) {
                out.features.extend([s, c]);
            }
            out.features.push(if self.options.holidays.contains(date) { 1.0 } else { 0.0 });
            out.features.extend(one_hot(&self.day_type_vocab, day_type(date, &self.options.holidays)));
            let numeric = self.numeric_raw(frame, t);
            if let Some(s) = &self.numeric_scaler {
                out.features.extend(numeric.iter().enumerate().map(|(j, x)| s.apply_value(j, *x)));
            }
            if !embeddings.is_empty() {
                let wd = date.weekday().num_days_from_monday().to_string();
                out.categorical.push(self.weekday_vocab.index(&wd));
            }
        }
        out.feature_names = self.feature_names.clone();
        out.embeddings = embeddings;
        out.scaled_target = self.target_scaler.apply(&frame.target);
        Ok(out)
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        self.target_scaler.apply_value(0, y)
    }

    pub fn invert_target(&self, y: f64) -> f64 {
        self.target_scaler.invert_value(0, y)
    }

    /// Stable content hash used to tie checkpoints to their scaling.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain data serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn frame(hours: usize) -> FeatureFrame {
        let start = Utc.with_ymd_and_hms(2019, 12, 23, 0, 0, 0).unwrap();
        let mut f = FeatureFrame::raw("a", start, (0..hours).map(|t| (t % 24) as f64).collect());
        f.stations = vec!["s1".into(), "s2".into()];
        f.activity = (0..hours).map(|t| (0..(t % 3) as u32).collect()).collect();
        f
    }

    fn options() -> FeatureOptions {
        FeatureOptions {
            holidays: HolidayCalendar::new([NaiveDate::from_ymd_opt(2019, 12, 25).unwrap()]),
            ..Default::default()
        }
    }

    #[test]
    fn encoded_frame_layout() {
        let f = frame(24 * 14);
        let plan = FeaturePlan::fit(&f, 0..24 * 7, options()).unwrap();
        let e = plan.apply(&f).unwrap();
        assert!(e.is_encoded());
        assert_eq!(e.num_features(), 7 + 3 + 1);
        assert_eq!(plan.embeddings()[0].rows, 8);
        assert_eq!(plan.embeddings()[0].dim, 4);
        // 2019-12-25 is a Wednesday holiday.
        let xmas = 48 + 10;
        let holiday = e.feature_column("holiday").unwrap();
        assert_eq!(holiday[xmas], 1.0);
        assert_eq!(holiday[xmas + 24], 0.0);
        assert_eq!(e.feature_column("day_type=holiday").unwrap()[xmas], 1.0);
        assert_eq!(e.feature_column("day_type=weekend").unwrap()[24 * 5], 1.0);
        assert_eq!(e.categorical[0], 1);
        assert_eq!(e.categorical[24 * 6], 7);
        for t in 0..e.len() {
            let row = e.feature_row(t);
            for p in 0..3 {
                let (s, c) = (row[2 * p], row[2 * p + 1]);
                assert!((s * s + c * c - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(e.scaled_target[5], 5.0 / 23.0);
    }

    #[test]
    fn scalers_use_fit_range_only() {
        let mut f = frame(300);
        f.target[250] = 1000.0;
        let train_only = FeaturePlan::fit(&f, 0..200, options()).unwrap();
        let with_test = FeaturePlan::fit(&f, 0..300, options()).unwrap();
        assert_eq!(train_only.target_scaler.max, vec![23.0]);
        assert_ne!(train_only.hash(), with_test.hash());
        assert!(train_only.apply(&f).unwrap().scaled_target[250] > 1.0);
        let refit = train_only.refit(&f, 0..300).unwrap();
        assert_eq!(refit.feature_names, train_only.feature_names);
        assert_eq!(refit.target_scaler, with_test.target_scaler);
    }

    #[test]
    fn target_round_trip() {
        let f = frame(100);
        let plan = FeaturePlan::fit(&f, 0..80, options()).unwrap();
        for y in [0.0, 3.3, 40.0] {
            assert!((plan.invert_target(plan.scale_target(y)) - y).abs() < 1e-12);
        }
    }
}
