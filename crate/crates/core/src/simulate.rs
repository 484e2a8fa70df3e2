//! Full runs: source, both stations, and the per-station event logs.
//!
//! Pairs are processed in fixed chunks of [`CHUNK_PAIRS`]. Each chunk draws
//! from its own labeled streams, so chunks can run on any number of threads
//! and the merged result is the same as a serial run.

use rayon::prelude::*;

use crate::angle::Angle;
use crate::config::{Case, ConfigError, SimConfig};
use crate::emission::{emit_pair_case1, emit_pair_case2};
use crate::estimators::{CorrelationReport, PairStatistics};
use crate::event::{DetectionEvent, EventLog, Station};
use crate::pairing::window_in_ticks;
use crate::rng::{derive_stream, RngStream};
use crate::station::{process_particle, StationConfig, StationStreams};

pub const CHUNK_PAIRS: u64 = 65_536;

/// A validated configuration ready to run.
#[derive(Clone, Debug)]
pub struct Simulation {
    cfg: SimConfig,
    prefix: String,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, ConfigError> {
        Ok(Simulation {
            cfg: cfg.validate()?,
            prefix: String::new(),
        })
    }

    /// Prepends `prefix` to every stream label, so that runs sharing a seed
    /// (the points of a sweep, say) draw from unrelated streams.
    pub fn with_stream_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.prefix = prefix.into();
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn num_chunks(&self) -> u64 {
        self.cfg.num_pairs.div_ceil(CHUNK_PAIRS)
    }

    fn station(&self, station: Station) -> StationConfig {
        StationConfig {
            station,
            angles: match station {
                Station::One => self.cfg.angles1.clone(),
                Station::Two => self.cfg.angles2.clone(),
            },
            delay_exponent: self.cfg.delay_exponent,
            max_delay: self.cfg.max_delay,
            tag_resolution: self.cfg.tag_resolution,
        }
    }

    fn stream(&self, role: &str, chunk: u64) -> RngStream {
        derive_stream(self.cfg.seed, &format!("{}{role}/chunk-{chunk}", self.prefix))
    }

    fn streams(&self, station: &str, chunk: u64) -> StationStreams<RngStream> {
        StationStreams {
            setting: self.stream(&format!("{station}.setting"), chunk),
            polarizer: self.stream(&format!("{station}.polarizer"), chunk),
            delay: self.stream(&format!("{station}.delay"), chunk),
        }
    }

    /// Runs one chunk, handing each detected pair to `sink`. Returns the
    /// number of source attempts (equal to the pair count in Case I).
    pub fn run_chunk(&self, chunk: u64, mut sink: impl FnMut(DetectionEvent, DetectionEvent)) -> u64 {
        let cfg = &self.cfg;
        let start = chunk * CHUNK_PAIRS;
        let end = (start + CHUNK_PAIRS).min(cfg.num_pairs);
        let (st1, st2) = (self.station(Station::One), self.station(Station::Two));
        let mut source = self.stream("source", chunk);
        let mut s1 = self.streams("station1", chunk);
        let mut s2 = self.streams("station2", chunk);
        let per_tick = cfg.emission_spacing / cfg.tag_resolution;
        let mut attempts = 0u64;
        for n in start..end {
            let pair = match cfg.case {
                Case::CaseI => {
                    attempts += 1;
                    emit_pair_case1(n, &mut source, cfg.emission_spacing)
                }
                Case::CaseII => {
                    let (eta1, eta2) = (cfg.eta1.unwrap_or(Angle::ZERO), cfg.eta2.unwrap_or(Angle::ZERO));
                    let d = emit_pair_case2(n, eta1, eta2, &mut source, cfg.emission_spacing);
                    attempts += d.attempts as u64;
                    d.pair
                }
            };
            let tick = (n as f64 * per_tick).round() as i64;
            let e1 = process_particle(&pair, &st1, &mut s1, tick);
            let e2 = process_particle(&pair, &st2, &mut s2, tick);
            sink(e1, e2);
        }
        attempts
    }

    fn empty_log(&self, station: Station) -> EventLog {
        let st = self.station(station);
        let mut log = EventLog::new(station, self.cfg.tag_resolution, st.angles);
        let cfg = &self.cfg;
        let meta = [
            ("case", format!("{:?}", cfg.case)),
            ("num_pairs", cfg.num_pairs.to_string()),
            ("delay_exponent", cfg.delay_exponent.to_string()),
            ("max_delay", cfg.max_delay.to_string()),
            ("window", cfg.window.to_string()),
            ("emission_spacing", cfg.emission_spacing.to_string()),
            ("seed", cfg.seed.to_string()),
        ];
        for (k, v) in meta {
            log.metadata.insert(k.to_owned(), v);
        }
        log
    }

    /// Both stations' logs, one event per pair, in emission order.
    pub fn generate_logs(&self) -> (EventLog, EventLog) {
        let chunks: Vec<(Vec<DetectionEvent>, Vec<DetectionEvent>, u64)> = (0..self.num_chunks())
            .into_par_iter()
            .map(|c| {
                let mut a = Vec::with_capacity(CHUNK_PAIRS as usize);
                let mut b = Vec::with_capacity(CHUNK_PAIRS as usize);
                let attempts = self.run_chunk(c, |e1, e2| {
                    a.push(e1);
                    b.push(e2);
                });
                (a, b, attempts)
            })
            .collect();
        let mut log1 = self.empty_log(Station::One);
        let mut log2 = self.empty_log(Station::Two);
        let mut attempts = 0;
        log1.events.reserve(self.cfg.num_pairs as usize);
        log2.events.reserve(self.cfg.num_pairs as usize);
        for (a, b, n) in chunks {
            log1.events.extend(a);
            log2.events.extend(b);
            attempts += n;
        }
        for log in [&mut log1, &mut log2] {
            log.metadata.insert("source_attempts".into(), attempts.to_string());
        }
        (log1, log2)
    }

    /// Index-window tally, `Γ` counts and single-particle sums without
    /// keeping the logs. The index window is `k = ⌈W/τ⌉` unless `k` is given.
    pub fn pair_statistics(&self, k: Option<u64>) -> PairStatistics {
        let cfg = &self.cfg;
        let k = k.unwrap_or_else(|| cfg.index_window());
        let w = window_in_ticks(cfg.window, cfg.tag_resolution);
        let (m1, m2) = (cfg.angles1.len(), cfg.angles2.len());
        (0..self.num_chunks())
            .into_par_iter()
            .map(|c| {
                let mut st = PairStatistics::new(m1, m2, k, w);
                self.run_chunk(c, |e1, e2| st.observe(&e1, &e2));
                st
            })
            .reduce(
                || PairStatistics::new(m1, m2, k, w),
                |mut a, b| {
                    a.merge(&b).expect("chunks share one shape");
                    a
                },
            )
    }

    /// Correlation report under the index-window criterion.
    pub fn report(&self, k: Option<u64>) -> CorrelationReport {
        let stats = self.pair_statistics(k);
        let mut r = CorrelationReport::from_statistics(&stats, &self.cfg.angles1, &self.cfg.angles2);
        let s = &mut r.summary;
        s.window = Some(self.cfg.window);
        s.d = Some(self.cfg.delay_exponent);
        s.tau = Some(self.cfg.tag_resolution);
        s.seed = Some(self.cfg.seed);
        r
    }
}
