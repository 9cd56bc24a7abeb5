//! Host-side data acquisition and processing: frame decoding, calibration,
//! filtering, aggregation and local persistence.

mod calibrate;
mod frame;
mod series;
mod store;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

pub use calibrate::{calibrate, code_to_volts, Calibration, SATURATED};
pub use frame::{checksum, decode_frame, FrameDecoder, FrameError, FramePayload};
pub use series::{
    aggregate, apply_filter, filter_values, AggregateRow, CalibratedSeries, FilterKind, FilterSpec, SeriesPoint, Stat,
};
pub use store::{log_file_name, Record, SampleStore, StoreError};

pub type SharedStore = Arc<RwLock<SampleStore>>;

/// Decodes parallel-port bytes into calibrated, persisted records.
#[derive(Debug)]
pub struct Daps {
    decoder: FrameDecoder,
    calibrations: BTreeMap<u8, Calibration>,
    vref_v: f64,
    store: SharedStore,
    latest: BTreeMap<u8, Record>,
    unknown_channel: u64,
    decoded: u64,
}

impl Daps {
    pub fn new(calibrations: BTreeMap<u8, Calibration>, vref_v: f64, store: SharedStore) -> Self {
        Self {
            decoder: FrameDecoder::new(),
            calibrations,
            vref_v,
            store,
            latest: BTreeMap::new(),
            unknown_channel: 0,
            decoded: 0,
        }
    }

    pub fn store(&self) -> &SharedStore {
        &self.store
    }

    pub fn decoder(&self) -> &FrameDecoder {
        &self.decoder
    }

    pub fn calibration(&self, channel: u8) -> Option<&Calibration> {
        self.calibrations.get(&channel)
    }

    /// Valid frames for known channels.
    pub fn decoded(&self) -> u64 {
        self.decoded
    }

    pub fn unknown_channel_frames(&self) -> u64 {
        self.unknown_channel
    }

    pub fn latest(&self) -> &BTreeMap<u8, Record> {
        &self.latest
    }

    /// Feeds one byte received at `t_us`. Returns the record when it
    /// completes a valid frame. Storage failures are counted by the store
    /// and do not stop ingestion.
    pub fn ingest_byte(&mut self, b: u8, t_us: u64) -> Option<Record> {
        let payload = self.decoder.push(b)?.ok()?;
        let Some(cal) = self.calibrations.get(&payload.channel) else {
            self.unknown_channel += 1;
            return None;
        };
        self.decoded += 1;
        let rec = Record {
            t_us,
            channel: payload.channel,
            gain: payload.gain.map_or(0, |g| g.factor()),
            raw: payload.raw,
            value: calibrate(payload.raw, payload.gain, cal, self.vref_v),
        };
        let _ = self.store.write().expect("store lock poisoned").persist(rec);
        self.latest.insert(rec.channel, rec);
        Some(rec)
    }

    /// Stored points for a channel as a series.
    pub fn series(&self, channel: u8, from_us: u64, to_us: u64) -> CalibratedSeries {
        query_series(&self.store, &self.calibrations, channel, from_us, to_us)
    }
}

pub fn query_series(
    store: &SharedStore,
    calibrations: &BTreeMap<u8, Calibration>,
    channel: u8,
    from_us: u64,
    to_us: u64,
) -> CalibratedSeries {
    let recs = store.read().expect("store lock poisoned").query(channel, from_us, to_us);
    CalibratedSeries {
        channel,
        unit: calibrations.get(&channel).map_or("", |c| c.unit()).to_string(),
        points: recs
            .iter()
            .map(|r| SeriesPoint {
                t_us: r.t_us,
                value: r.value,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daq_fw::{frame_sample, Sample};
    use crate::hw::Gain;

    fn daps() -> Daps {
        let mut cal = BTreeMap::new();
        cal.insert(0, Calibration::Compass);
        cal.insert(1, Calibration::Temperature { volts_per_degc: 0.01 });
        Daps::new(cal, 5.0, Arc::new(RwLock::new(SampleStore::memory())))
    }

    #[test]
    fn frames_become_records() {
        let mut d = daps();
        let f = frame_sample(&Sample {
            channel: 1,
            t_us: 0,
            gain: Some(Gain::X4),
            raw: 205,
        });
        let out: Vec<_> = f.iter().filter_map(|&b| d.ingest_byte(b, 42)).collect();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].gain, 4);
        assert!((out[0].value - 25.0489).abs() < 1e-4);
        assert_eq!(d.series(1, 0, 100).points.len(), 1);
        assert_eq!(d.series(1, 0, 100).unit, "°C");
    }

    #[test]
    fn interleaved_channels_stay_partitioned() {
        let mut d = daps();
        for (i, ch) in [0u8, 1, 0, 1, 1].iter().enumerate() {
            let gain = (*ch == 1).then_some(Gain::X1);
            for b in frame_sample(&Sample { channel: *ch, t_us: 0, gain, raw: 100 + i as u16 }) {
                d.ingest_byte(b, i as u64 * 10);
            }
        }
        let st = d.store().read().unwrap();
        assert!(st.all(0).iter().all(|r| r.channel == 0));
        assert_eq!(st.all(0).len(), 2);
        assert_eq!(st.all(1).len(), 3);
    }

    #[test]
    fn unknown_channel_counted() {
        let mut d = daps();
        for b in frame_sample(&Sample { channel: 9, t_us: 0, gain: Some(Gain::X1), raw: 1 }) {
            d.ingest_byte(b, 1);
        }
        assert_eq!(d.unknown_channel_frames(), 1);
        assert_eq!(d.decoded(), 0);
    }
}
