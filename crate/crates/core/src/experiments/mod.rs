//! Metrics, Monte-Carlo sweeps and the flat configuration format.

pub mod config;
pub mod metrics;
pub mod parallel;
pub mod sweep;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::ExperimentConfig;
pub use metrics::{inject_feedback_error, nmse, nmse_db, rate, ser_qpsk};
pub use parallel::Execution;
pub use sweep::{run_sweep, SweepContext, SweepSpec};

/// Fixed header of the results CSV.
pub const CSV_HEADER: &str = "scenario,axis,value,nmse_db,rate,ser,iters,seconds,trials";

/// Estimation pipelines compared by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    UpLmmse,
    UpGan,
    DlGan,
    /// Downlink from the uplink estimate with `φ_dl = φ_up`.
    DlReciprocityCopy,
    /// Downlink from the uplink estimate with `φ_dl = 2π f_dl τ`.
    DlReciprocityDelay,
    DlLs,
    DlR2f2,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Self::UpLmmse,
        Self::UpGan,
        Self::DlGan,
        Self::DlReciprocityCopy,
        Self::DlReciprocityDelay,
        Self::DlLs,
        Self::DlR2f2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::UpLmmse => "UP-LMMSE",
            Self::UpGan => "UP-GAN",
            Self::DlGan => "DL-GAN",
            Self::DlReciprocityCopy => "DL-Full-Reciprocity-copy",
            Self::DlReciprocityDelay => "DL-Full-Reciprocity-delay",
            Self::DlLs => "DL-LS",
            Self::DlR2f2 => "DL-Modified-R2F2",
        }
    }

    pub fn is_downlink(self) -> bool {
        !matches!(self, Self::UpLmmse | Self::UpGan)
    }

    /// Whether the scenario builds on the UP-GAN uplink estimate.
    pub fn needs_generator(self) -> bool {
        matches!(self, Self::UpGan | Self::DlGan | Self::DlReciprocityCopy | Self::DlReciprocityDelay | Self::DlLs)
    }

    /// Whether the BS receives fed-back downlink phases, and so sees feedback error.
    pub fn feeds_back_phases(self) -> bool {
        matches!(self, Self::DlGan | Self::DlLs | Self::DlR2f2)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace('_', "-")
}

impl FromStr for Scenario {
    type Err = Error;

    /// Accepts the display names case-insensitively, with `_` for `-`.
    fn from_str(s: &str) -> Result<Self> {
        let key = normalize(s);
        Self::ALL
            .into_iter()
            .find(|sc| normalize(sc.name()) == key)
            .ok_or_else(|| Error::UnknownScenario(s.trim().to_string()))
    }
}

/// Parses a comma-separated scenario list; `all` selects every scenario.
pub fn parse_scenarios(s: &str) -> Result<Vec<Scenario>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Scenario::ALL.to_vec());
    }
    let list: Vec<Scenario> = s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Config("scenario list is empty".into()));
    }
    Ok(list)
}

/// Quantity varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SnrDb,
    /// Downlink pilot slots, with `|K_dl| = p`.
    P,
    /// Number of downlink training antennas.
    MDlSize,
    SigmaPhiDeg,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::SnrDb => "snr_db",
            Self::P => "p",
            Self::MDlSize => "m_dl_size",
            Self::SigmaPhiDeg => "sigma_phi_deg",
        }
    }

    /// Default grid for the axis.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Self::SnrDb => (0..=8).map(|i| -10.0 + 5.0 * i as f64).collect(),
            Self::P => vec![1.0, 2.0, 4.0, 8.0, 16.0],
            Self::MDlSize => vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            Self::SigmaPhiDeg => vec![0.0, 10.0, 20.0, 30.0, 40.0],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "snr_db" | "snr" => Ok(Self::SnrDb),
            "p" => Ok(Self::P),
            "m_dl_size" | "m_dl" => Ok(Self::MDlSize),
            "sigma_phi_deg" | "sigma_phi" => Ok(Self::SigmaPhiDeg),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// One aggregated line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: String,
    pub axis: String,
    pub value: f64,
    /// `10·log10` of the trial-averaged linear NMSE.
    pub nmse_db: f64,
    /// Mean rate, bits/s/Hz.
    pub rate: f64,
    pub ser: f64,
    pub iters: f64,
    /// Mean wall time per estimate; zero unless timing was requested.
    pub seconds: f64,
    pub trials: usize,
}

/// Writes rows under [`CSV_HEADER`].
pub fn write_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidInput(format!("unexpected results header `{}`", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert_eq!("dl_gan".parse::<Scenario>().unwrap(), Scenario::DlGan);
        assert!(matches!("DL-Magic".parse::<Scenario>(), Err(Error::UnknownScenario(_))));
        assert_eq!(parse_scenarios("all").unwrap().len(), 7);
        assert_eq!(parse_scenarios("UP-GAN, DL-LS").unwrap(), vec![Scenario::UpGan, Scenario::DlLs]);
    }

    #[test]
    fn csv_round_trip_keeps_header() {
        let rows = vec![MetricRow {
            scenario: "DL-GAN".into(),
            axis: "snr_db".into(),
            value: 10.0,
            nmse_db: -7.25,
            rate: 3.5,
            ser: 0.01,
            iters: 12.5,
            seconds: 0.0,
            trials: 4,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }
}
